#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <ctime>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdec/evaluate.hpp"
#include "mdec/ingest.hpp"
#include "mdec/report.hpp"

namespace mdec::server {

using nlohmann::json;

enum class PhaseName { Development, Final };
enum class Visibility { PublicAnonymized, Private };

inline const char* to_string(PhaseName p) { return p == PhaseName::Development ? "development" : "final"; }

inline std::optional<PhaseName> parse_phase_name(std::string_view s) {
    if (s == "development") return PhaseName::Development;
    if (s == "final") return PhaseName::Final;
    return std::nullopt;
}

/// Development boards are public with anonymised names; Final boards are private.
struct Phase {
    PhaseName name = PhaseName::Development;
    std::int64_t open_from = 0;   ///< unix seconds, inclusive
    std::int64_t open_until = 0;  ///< unix seconds, exclusive
    fs::path manifest_ref;

    Visibility visibility() const {
        return name == PhaseName::Development ? Visibility::PublicAnonymized : Visibility::Private;
    }
    bool open_at(std::int64_t t) const { return t >= open_from && t < open_until; }
};

enum class SubmissionStatus { Queued, Evaluated, Failed };

inline const char* to_string(SubmissionStatus s) {
    switch (s) {
        case SubmissionStatus::Queued: return "queued";
        case SubmissionStatus::Evaluated: return "evaluated";
        case SubmissionStatus::Failed: return "failed";
    }
    return "queued";
}

struct StoredSubmission {
    std::string id;
    std::string team;
    PhaseName phase = PhaseName::Development;
    std::int64_t received_at = 0;
    SubmissionStatus status = SubmissionStatus::Queued;
    std::string failure;
    std::optional<AggregateReport> report;
};

struct ServiceConfig {
    fs::path data_dir;
    std::vector<Phase> phases;
    std::map<std::string, std::string> team_tokens;  ///< bearer token -> team
    std::set<std::string> operator_tokens;
    std::size_t daily_cap = 5;
    std::size_t workers = 1;
    EvalConfig eval;
    std::string host = "127.0.0.1";
    int port = 8080;
    /// Start the evaluation workers on construction. Off only in tests that
    /// drive the queue by hand.
    bool autostart_workers = true;
};

/// Accepts "YYYY-MM-DDTHH:MM:SSZ" or integer unix seconds.
inline std::int64_t parse_timestamp(const json& j, const std::string& field) {
    if (j.is_number_integer()) return j.get<std::int64_t>();
    if (!j.is_string()) throw Error(ErrorCode::ParseError, field, "expected ISO-8601 string or unix seconds");
    const std::string s = j.get<std::string>();
    std::tm tm{};
    char z = 0;
    if (std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%c", &tm.tm_year, &tm.tm_mon, &tm.tm_mday, &tm.tm_hour,
                    &tm.tm_min, &tm.tm_sec, &z) != 7 ||
        z != 'Z')
        throw Error(ErrorCode::ParseError, field, "expected YYYY-MM-DDTHH:MM:SSZ, got '" + s + "'");
    tm.tm_year -= 1900;
    tm.tm_mon -= 1;
    return static_cast<std::int64_t>(timegm(&tm));
}

inline ServiceConfig parse_service_config(const json& j, const fs::path& base_dir) {
    try {
        ServiceConfig c;
        c.data_dir = base_dir / j.at("data_dir").get<std::string>();
        c.daily_cap = j.value("daily_cap", std::size_t{5});
        c.workers = j.value("workers", std::size_t{1});
        c.host = j.value("host", std::string("127.0.0.1"));
        c.port = j.value("port", 8080);
        if (j.contains("eval_config")) c.eval = eval_config_from_json(j["eval_config"]);
        std::set<PhaseName> seen;
        for (const auto& p : j.at("phases")) {
            Phase ph;
            auto name = parse_phase_name(p.at("name").get<std::string>());
            if (!name) throw Error(ErrorCode::ParseError, "phases.name", "expected development or final");
            if (!seen.insert(*name).second) throw Error(ErrorCode::ParseError, "phases.name", "duplicate phase");
            ph.name = *name;
            ph.open_from = parse_timestamp(p.at("open_from"), "open_from");
            ph.open_until = parse_timestamp(p.at("open_until"), "open_until");
            if (ph.open_from >= ph.open_until)
                throw Error(ErrorCode::ParseError, "open_until", "phase must open before it closes");
            ph.manifest_ref = base_dir / p.at("manifest").get<std::string>();
            c.phases.push_back(ph);
        }
        for (const auto& t : j.at("teams")) {
            const auto team = t.at("team").get<std::string>();
            if (team.empty()) throw Error(ErrorCode::ParseError, "teams.team", "must be non-empty");
            c.team_tokens[t.at("token").get<std::string>()] = team;
        }
        if (j.contains("operators"))
            for (const auto& t : j["operators"]) c.operator_tokens.insert(t.get<std::string>());
        return c;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, "server config", e.what());
    }
}

inline ServiceConfig load_service_config(const fs::path& path) {
    Bytes data = read_file(path);
    json j;
    try {
        j = json::parse(data.begin(), data.end());
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string(), e.what());
    }
    return parse_service_config(j, path.parent_path());
}

struct Requester {
    std::string team;  ///< empty for operators
    bool is_operator = false;
};

inline std::int64_t system_clock_seconds() {
    return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

namespace detail {

// Durable single-line append: write + fsync.
inline void append_line(const fs::path& path, const std::string& line) {
    int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0) throw Error(ErrorCode::Io, path.string(), "cannot open event log");
    std::string buf = line + "\n";
    const char* p = buf.data();
    std::size_t left = buf.size();
    while (left > 0) {
        ssize_t n = ::write(fd, p, left);
        if (n < 0) {
            ::close(fd);
            throw Error(ErrorCode::Io, path.string(), "event log write failed");
        }
        p += n;
        left -= static_cast<std::size_t>(n);
    }
    ::fsync(fd);
    ::close(fd);
}

inline void write_durable(const fs::path& path, std::span<const std::uint8_t> data) {
    const fs::path tmp = path.string() + ".tmp";
    write_file(tmp, data);
    int fd = ::open(tmp.c_str(), O_RDONLY);
    if (fd >= 0) {
        ::fsync(fd);
        ::close(fd);
    }
    fs::rename(tmp, path);
}

inline std::string random_hex(std::size_t chars) {
    static thread_local std::random_device rd;
    static const char* hex = "0123456789abcdef";
    std::string out;
    while (out.size() < chars) {
        auto v = rd();
        for (int i = 0; i < 8 && out.size() < chars; ++i, v >>= 4) out.push_back(hex[v & 0xf]);
    }
    return out;
}

}  // namespace detail

/// Phased challenge service. Every state change is an event appended to
/// `data_dir/events.jsonl`; state is rebuilt from that log on start-up, and
/// submissions still queued at that point are evaluated again.
class ChallengeService {
public:
    using Clock = std::function<std::int64_t()>;

    explicit ChallengeService(ServiceConfig cfg, Clock clock = system_clock_seconds)
        : cfg_(std::move(cfg)), clock_(std::move(clock)), digest_(config_digest(cfg_.eval)) {
        validate_config(cfg_.eval);
        for (const auto& p : cfg_.phases) manifests_[p.name] = load_manifest(p.manifest_ref);
        fs::create_directories(cfg_.data_dir / "archives");
        replay();
        publish();
        if (cfg_.autostart_workers) start_workers();
    }

    ~ChallengeService() { stop(); }

    ChallengeService(const ChallengeService&) = delete;
    ChallengeService& operator=(const ChallengeService&) = delete;

    const std::string& config_digest_hex() const { return digest_; }
    const ServiceConfig& config() const { return cfg_; }

    std::optional<Requester> identify(std::string_view token) const {
        if (token.empty()) return std::nullopt;
        std::string t(token);
        if (cfg_.operator_tokens.count(t)) return Requester{"", true};
        auto it = cfg_.team_tokens.find(t);
        if (it == cfg_.team_tokens.end()) return std::nullopt;
        return Requester{it->second, false};
    }

    /// Persists and queues an archive. Throws UnknownPhase, PhaseClosed,
    /// BadArchive or RateLimited.
    std::string post_submission(std::string_view phase_name, const std::string& team,
                                std::span<const std::uint8_t> archive) {
        const Phase& phase = find_phase(phase_name);
        const std::int64_t now = clock_();
        if (!phase.open_at(now)) throw Error(ErrorCode::PhaseClosed, to_string(phase.name), "phase is not open");
        check_archive(archive);

        std::lock_guard writer(write_mu_);
        const std::int64_t day = floor_day(now);
        std::size_t today = 0;
        for (const auto& [_, s] : state_.submissions)
            if (s.team == team && s.phase == phase.name && floor_day(s.received_at) == day) ++today;
        if (today >= cfg_.daily_cap)
            throw Error(ErrorCode::RateLimited, team, "daily submission cap of " + std::to_string(cfg_.daily_cap) + " reached");

        if (!state_.handles[phase.name].count(team)) {
            std::set<std::string> taken;
            for (const auto& [_, h] : state_.handles[phase.name]) taken.insert(h);
            std::string handle;
            do handle = "anon-" + detail::random_hex(6);
            while (taken.count(handle));
            apply_and_log(json{{"event", "handle"}, {"phase", to_string(phase.name)}, {"team", team}, {"handle", handle}});
        }

        std::string id;
        do id = detail::random_hex(16);
        while (state_.submissions.count(id));
        detail::write_durable(archive_path(id), archive);
        apply_and_log(json{{"event", "received"},
                           {"id", id},
                           {"team", team},
                           {"phase", to_string(phase.name)},
                           {"received_at", now}});
        enqueue(id);
        return id;
    }

    /// Leaderboard view for a phase, filtered by the requester's role.
    json get_leaderboard(std::string_view phase_name, const std::optional<Requester>& who) const {
        const Phase& phase = find_phase(phase_name);
        auto snap = snapshot();
        json out{{"phase", to_string(phase.name)}, {"eval_config_digest", digest_}};
        const bool op = who && who->is_operator;

        if (phase.visibility() == Visibility::Private && !op) {
            out["visibility"] = "private";
            json mine = json::array();
            if (who) {
                for (const auto& s : ordered(*snap, phase.name))
                    if (s->team == who->team)
                        mine.push_back(json{{"id", s->id}, {"status", to_string(s->status)}, {"received_at", s->received_at}});
            }
            out["submissions"] = std::move(mine);
            return out;
        }

        out["visibility"] = op ? "operator" : "public_anonymized";
        json rows = json::array();
        const auto handles_it = snap->handles.find(phase.name);
        for (const auto& e : board(*snap, phase.name)) {
            const bool self = who && !who->is_operator && who->team == e.team;
            std::string shown = e.team;
            if (!op && !self) shown = handles_it != snap->handles.end() ? handles_it->second.at(e.team) : "anonymous";
            rows.push_back(json{{"rank", e.rank}, {"team", shown}, {"is_self", self}, {"metrics", to_json_value(e.overall)}});
        }
        out["rows"] = std::move(rows);
        return out;
    }

    json get_submission_status(const std::string& id, const std::optional<Requester>& who) const {
        if (!who) throw Error(ErrorCode::Unauthorized, id, "a bearer token is required");
        auto snap = snapshot();
        auto it = snap->submissions.find(id);
        if (it == snap->submissions.end()) throw Error(ErrorCode::NotFound, id, "unknown submission");
        const StoredSubmission& s = it->second;
        if (!who->is_operator && who->team != s.team) throw Error(ErrorCode::Forbidden, id, "not your submission");

        json out{{"id", s.id},
                 {"team", s.team},
                 {"phase", to_string(s.phase)},
                 {"status", to_string(s.status)},
                 {"received_at", s.received_at},
                 {"eval_config_digest", digest_}};
        if (s.status == SubmissionStatus::Failed) out["failure"] = s.failure;
        const bool may_see = who->is_operator || s.phase == PhaseName::Development;
        if (may_see && s.report) out["report"] = to_json_value(*s.report);
        return out;
    }

    std::optional<StoredSubmission> find_submission(const std::string& id) const {
        auto snap = snapshot();
        auto it = snap->submissions.find(id);
        if (it == snap->submissions.end()) return std::nullopt;
        return it->second;
    }

    /// Evaluates the stored archive again without touching the log.
    AggregateReport reevaluate(const std::string& id) const {
        auto s = find_submission(id);
        if (!s) throw Error(ErrorCode::NotFound, id, "unknown submission");
        return evaluate_archive(s->phase, read_file(archive_path(id)));
    }

    std::size_t queued() const {
        std::lock_guard lock(queue_mu_);
        return queue_.size();
    }

    /// Evaluates one queued submission on the calling thread. Returns false
    /// when the queue is empty.
    bool process_one() {
        std::string id;
        {
            std::lock_guard lock(queue_mu_);
            if (queue_.empty()) return false;
            id = queue_.front();
            queue_.pop_front();
            ++in_flight_;
        }
        run(id);
        return true;
    }

    void start_workers() {
        if (!workers_.empty()) return;
        stopping_ = false;
        for (std::size_t i = 0; i < std::max<std::size_t>(1, cfg_.workers); ++i)
            workers_.emplace_back([this] { worker_loop(); });
    }

    /// Blocks until the queue is drained and no evaluation is in flight.
    void wait_idle() {
        std::unique_lock lock(queue_mu_);
        idle_cv_.wait(lock, [this] { return queue_.empty() && in_flight_ == 0; });
    }

    void stop() {
        {
            std::lock_guard lock(queue_mu_);
            stopping_ = true;
        }
        queue_cv_.notify_all();
        for (auto& t : workers_) t.join();
        workers_.clear();
    }

private:
    struct State {
        std::map<std::string, StoredSubmission> submissions;
        std::map<PhaseName, std::map<std::string, std::string>> handles;  // team -> handle
    };

    static std::int64_t floor_day(std::int64_t t) { return t >= 0 ? t / 86400 : (t - 86399) / 86400; }

    fs::path log_path() const { return cfg_.data_dir / "events.jsonl"; }
    fs::path archive_path(const std::string& id) const { return cfg_.data_dir / "archives" / (id + ".zip"); }

    const Phase& find_phase(std::string_view name) const {
        auto p = parse_phase_name(name);
        if (p)
            for (const auto& ph : cfg_.phases)
                if (ph.name == *p) return ph;
        throw Error(ErrorCode::UnknownPhase, std::string(name), "no such phase");
    }

    void check_archive(std::span<const std::uint8_t> archive) const {
        try {
            if (!zip::looks_like_zip(archive)) throw Error(ErrorCode::BadArchive, "archive", "not a zip archive");
            auto files = mdec::detail::strip_common_folder(zip::read_archive(archive));
            auto it = files.find(kSubmissionMetaFile);
            if (it == files.end()) throw Error(ErrorCode::BadArchive, kSubmissionMetaFile, "missing");
            parse_submission_meta(std::string_view(reinterpret_cast<const char*>(it->second.data()), it->second.size()));
        } catch (const Error& e) {
            if (e.code() == ErrorCode::BadArchive) throw;
            throw Error(ErrorCode::BadArchive, e.subject(), e.what());
        }
    }

    AggregateReport evaluate_archive(PhaseName phase, const Bytes& archive) const {
        const Manifest& manifest = manifests_.at(phase);
        Submission sub = load_submission_bytes(archive, manifest);
        return evaluate_submission(manifest, sub, cfg_.eval, EvaluateOptions{});
    }

    void run(const std::string& id) {
        json event;
        try {
            auto s = find_submission(id);
            if (!s) throw Error(ErrorCode::NotFound, id, "vanished from state");
            AggregateReport report = evaluate_archive(s->phase, read_file(archive_path(id)));
            event = json{{"event", "evaluated"}, {"id", id}, {"report", to_json_value(report)}};
        } catch (const std::exception& e) {
            event = json{{"event", "failed"}, {"id", id}, {"reason", e.what()}};
        }
        {
            std::lock_guard writer(write_mu_);
            apply_and_log(event);
        }
        {
            std::lock_guard lock(queue_mu_);
            --in_flight_;
        }
        idle_cv_.notify_all();
    }

    void worker_loop() {
        for (;;) {
            std::string id;
            {
                std::unique_lock lock(queue_mu_);
                queue_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
                if (stopping_) return;
                id = queue_.front();
                queue_.pop_front();
                ++in_flight_;
            }
            run(id);
        }
    }

    void enqueue(const std::string& id) {
        {
            std::lock_guard lock(queue_mu_);
            queue_.push_back(id);
        }
        queue_cv_.notify_one();
    }

    // Caller holds write_mu_ (or is the constructor).
    void apply_and_log(const json& event) {
        detail::append_line(log_path(), event.dump());
        apply(event);
        publish();
    }

    void apply(const json& e) {
        const std::string kind = e.at("event").get<std::string>();
        if (kind == "handle") {
            state_.handles[*parse_phase_name(e.at("phase").get<std::string>())][e.at("team").get<std::string>()] =
                e.at("handle").get<std::string>();
        } else if (kind == "received") {
            StoredSubmission s;
            s.id = e.at("id").get<std::string>();
            s.team = e.at("team").get<std::string>();
            s.phase = *parse_phase_name(e.at("phase").get<std::string>());
            s.received_at = e.at("received_at").get<std::int64_t>();
            state_.submissions[s.id] = std::move(s);
        } else if (kind == "evaluated") {
            auto& s = state_.submissions.at(e.at("id").get<std::string>());
            s.status = SubmissionStatus::Evaluated;
            s.report = aggregate_report_from_json(e.at("report"));
        } else if (kind == "failed") {
            auto& s = state_.submissions.at(e.at("id").get<std::string>());
            s.status = SubmissionStatus::Failed;
            s.failure = e.at("reason").get<std::string>();
        }
    }

    void replay() {
        std::error_code ec;
        if (!fs::exists(log_path(), ec)) return;
        Bytes data = read_file(log_path());
        std::string text(data.begin(), data.end());
        std::size_t pos = 0;
        while (pos < text.size()) {
            std::size_t end = text.find('\n', pos);
            const bool last = end == std::string::npos;
            std::string line = text.substr(pos, last ? std::string::npos : end - pos);
            pos = last ? text.size() : end + 1;
            if (line.empty()) continue;
            try {
                apply(json::parse(line));
            } catch (const std::exception& e) {
                // A torn final line is what a crash mid-append leaves behind.
                if (last) break;
                throw Error(ErrorCode::ParseError, log_path().string(), std::string("corrupt event: ") + e.what());
            }
        }
        std::vector<const StoredSubmission*> pending;
        for (const auto& [_, s] : state_.submissions)
            if (s.status == SubmissionStatus::Queued) pending.push_back(&s);
        std::sort(pending.begin(), pending.end(), [](auto* a, auto* b) {
            return a->received_at != b->received_at ? a->received_at < b->received_at : a->id < b->id;
        });
        for (auto* s : pending) queue_.push_back(s->id);
    }

    void publish() {
        auto next = std::make_shared<const State>(state_);
        std::atomic_store(&snapshot_, std::move(next));
    }

    std::shared_ptr<const State> snapshot() const { return std::atomic_load(&snapshot_); }

    static std::vector<const StoredSubmission*> ordered(const State& st, PhaseName phase) {
        std::vector<const StoredSubmission*> out;
        for (const auto& [_, s] : st.submissions)
            if (s.phase == phase) out.push_back(&s);
        std::sort(out.begin(), out.end(), [](auto* a, auto* b) {
            return a->received_at != b->received_at ? a->received_at < b->received_at : a->id < b->id;
        });
        return out;
    }

    // One row per team: its best evaluated submission under the ranking order.
    static std::vector<LeaderboardEntry> board(const State& st, PhaseName phase) {
        std::vector<std::pair<std::string, AggregateReport>> entries;
        for (const auto* s : ordered(st, phase))
            if (s->status == SubmissionStatus::Evaluated && s->report) entries.emplace_back(s->team, *s->report);
        std::vector<LeaderboardEntry> all = rank(entries);
        std::set<std::string> seen;
        std::vector<LeaderboardEntry> out;
        for (auto& e : all)
            if (seen.insert(e.team).second) out.push_back(e);
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i].rank = (i > 0 && mdec::detail::compare_score(out[i - 1].overall, out[i].overall) == 0) ? out[i - 1].rank
                                                                                                          : i + 1;
        return out;
    }

    ServiceConfig cfg_;
    Clock clock_;
    std::string digest_;
    std::map<PhaseName, Manifest> manifests_;

    std::mutex write_mu_;  // serialises log appends and state_ mutation
    State state_;
    std::shared_ptr<const State> snapshot_;

    mutable std::mutex queue_mu_;
    std::condition_variable queue_cv_;
    std::condition_variable idle_cv_;
    std::deque<std::string> queue_;
    std::size_t in_flight_ = 0;
    bool stopping_ = false;
    std::vector<std::thread> workers_;
};

}  // namespace mdec::server
