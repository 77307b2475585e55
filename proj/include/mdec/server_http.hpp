#pragma once

#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "mdec/server.hpp"

namespace mdec::server {

inline int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::UnknownPhase:
        case ErrorCode::NotFound: return 404;
        case ErrorCode::PhaseClosed:
        case ErrorCode::Forbidden: return 403;
        case ErrorCode::Unauthorized: return 401;
        case ErrorCode::RateLimited: return 429;
        case ErrorCode::Io: return 500;
        default: return 400;
    }
}

inline std::string bearer_token(const httplib::Request& req) {
    const std::string h = req.get_header_value("Authorization");
    constexpr std::string_view prefix = "Bearer ";
    if (h.size() > prefix.size() && h.compare(0, prefix.size(), prefix) == 0) return h.substr(prefix.size());
    return {};
}

/// Binds the service to HTTP routes. The service must outlive the server.
inline void register_routes(httplib::Server& http, ChallengeService& svc) {
    auto send = [&svc](httplib::Response& res, int status, json body) {
        body["eval_config_digest"] = svc.config_digest_hex();
        res.status = status;
        res.set_content(body.dump(), "application/json");
    };
    auto fail = [send](httplib::Response& res, const Error& e) {
        send(res, http_status(e.code()),
             json{{"error", to_string(e.code())}, {"subject", e.subject()}, {"message", e.what()}});
    };
    auto guarded = [fail, send](auto fn) {
        return [fn, fail, send](const httplib::Request& req, httplib::Response& res) {
            try {
                fn(req, res);
            } catch (const Error& e) {
                fail(res, e);
            } catch (const std::exception& e) {
                send(res, 500, json{{"error", "Internal"}, {"message", e.what()}});
            }
        };
    };

    http.Get("/healthz", guarded([send](const httplib::Request&, httplib::Response& res) {
                 send(res, 200, json{{"status", "ok"}});
             }));

    http.Post(R"(/phases/([^/]+)/submissions)",
              guarded([&svc, send](const httplib::Request& req, httplib::Response& res) {
                  auto who = svc.identify(bearer_token(req));
                  if (!who || who->is_operator)
                      throw Error(ErrorCode::Unauthorized, "Authorization", "a team bearer token is required");
                  std::string body = req.has_file("archive") ? req.get_file_value("archive").content : req.body;
                  std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(body.data()), body.size());
                  const std::string id = svc.post_submission(req.matches[1].str(), who->team, bytes);
                  send(res, 202, json{{"id", id}, {"status", "queued"}});
              }));

    http.Get(R"(/phases/([^/]+)/leaderboard)",
             guarded([&svc, send](const httplib::Request& req, httplib::Response& res) {
                 send(res, 200, svc.get_leaderboard(req.matches[1].str(), svc.identify(bearer_token(req))));
             }));

    http.Get(R"(/submissions/([^/]+))", guarded([&svc, send](const httplib::Request& req, httplib::Response& res) {
                 send(res, 200, svc.get_submission_status(req.matches[1].str(), svc.identify(bearer_token(req))));
             }));
}

}  // namespace mdec::server
