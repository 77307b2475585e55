#pragma once

#include <openssl/evp.h>

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdec/core.hpp"
#include "mdec/evaluate.hpp"

namespace mdec {

enum class ReportFormat { Json, Csv, Markdown };

inline std::optional<ReportFormat> parse_report_format(std::string_view s) {
    if (s == "json") return ReportFormat::Json;
    if (s == "csv") return ReportFormat::Csv;
    if (s == "markdown" || s == "md") return ReportFormat::Markdown;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// JSON. nlohmann::json keeps keys sorted, which is the canonical key order;
// doubles are printed in shortest round-trip form.
// ---------------------------------------------------------------------------

using nlohmann::json;

inline json to_json_value(const EvalConfig& c) {
    return json{{"depth_min", c.depth_min},   {"depth_max", c.depth_max},     {"fscore_tau", c.fscore_tau},
                {"edge_trunc", c.edge_trunc}, {"edge_sigma", c.edge_sigma},   {"edge_low_q", c.edge_low_q},
                {"edge_high_q", c.edge_high_q}, {"delta_base", c.delta_base}, {"robust_refit", c.robust_refit}};
}

/// Unlisted keys keep their defaults. The result is validated.
inline EvalConfig eval_config_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "config", "expected a JSON object");
    EvalConfig c;
    auto num = [&](const char* key, double& out) {
        if (!j.contains(key)) return;
        if (!j[key].is_number()) throw Error(ErrorCode::InvalidConfig, key, "expected a number");
        out = j[key].get<double>();
    };
    num("depth_min", c.depth_min);
    num("depth_max", c.depth_max);
    num("fscore_tau", c.fscore_tau);
    num("edge_trunc", c.edge_trunc);
    num("edge_sigma", c.edge_sigma);
    num("edge_low_q", c.edge_low_q);
    num("edge_high_q", c.edge_high_q);
    num("delta_base", c.delta_base);
    if (j.contains("robust_refit")) {
        if (!j["robust_refit"].is_boolean()) throw Error(ErrorCode::InvalidConfig, "robust_refit", "expected a boolean");
        c.robust_refit = j["robust_refit"].get<bool>();
    }
    validate_config(c);
    return c;
}

/// SHA-256 (hex) of the canonical config JSON; identifies the metric settings.
inline std::string config_digest(const EvalConfig& c) {
    const std::string text = to_json_value(c).dump();
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

inline json to_json_value(const MetricReport& m) {
    json j = json::object();
    for (const auto& f : kMetricFields) {
        const auto& v = m.*f.member;
        j[f.name] = v ? json(*v) : json(nullptr);
    }
    j["valid_pixel_count"] = m.valid_pixel_count;
    return j;
}

inline MetricReport metric_report_from_json(const json& j) {
    MetricReport m;
    for (const auto& f : kMetricFields) {
        if (j.contains(f.name) && !j[f.name].is_null()) m.*f.member = j[f.name].get<double>();
    }
    m.valid_pixel_count = j.value("valid_pixel_count", std::size_t{0});
    return m;
}

inline json to_json_value(const AffineAlignment& a) {
    return json{{"scale", a.scale},
                {"shift", a.shift},
                {"method", std::string(to_string(a.method))},
                {"degenerate", a.degenerate},
                {"robust_refit", a.robust_refit}};
}

inline AffineAlignment alignment_from_json(const json& j) {
    AffineAlignment a;
    a.scale = j.at("scale").get<double>();
    a.shift = j.at("shift").get<double>();
    auto m = parse_alignment_method(j.at("method").get<std::string>());
    if (!m) throw Error(ErrorCode::ParseError, "alignment.method", "unknown method");
    a.method = *m;
    a.degenerate = j.value("degenerate", false);
    a.robust_refit = j.value("robust_refit", false);
    return a;
}

inline json to_json_value(const AggregateRow& r) {
    return json{{"frames", r.frames}, {"metrics", to_json_value(r.mean)}, {"coverage", r.coverage}};
}

inline AggregateRow aggregate_row_from_json(const json& j) {
    AggregateRow r;
    r.frames = j.at("frames").get<std::size_t>();
    r.mean = metric_report_from_json(j.at("metrics"));
    r.coverage = j.at("coverage").get<std::map<std::string, std::size_t>>();
    return r;
}

inline json to_json_value(const AggregateReport& r) {
    json frames = json::array();
    for (const auto& f : r.per_frame) {
        frames.push_back(json{{"frame_id", f.frame_id},
                              {"category", f.category},
                              {"metrics", to_json_value(f.metrics)},
                              {"alignment", to_json_value(f.alignment)},
                              {"clamped_count", f.clamped_count},
                              {"error", f.error ? json(*f.error) : json(nullptr)}});
    }
    json cats = json::object();
    for (const auto& [name, row] : r.per_category) cats[name] = to_json_value(row);
    return json{{"team", r.team},
                {"prediction_kind", std::string(to_string(r.prediction_kind))},
                {"alignment_method", std::string(to_string(r.alignment_method))},
                {"pooling", to_string(r.pooling)},
                {"config", to_json_value(r.config)},
                {"config_digest", config_digest(r.config)},
                {"per_frame", std::move(frames)},
                {"per_category", std::move(cats)},
                {"overall", to_json_value(r.overall)}};
}

inline AggregateReport aggregate_report_from_json(const json& j) {
    try {
        AggregateReport r;
        r.team = j.at("team").get<std::string>();
        auto kind = parse_prediction_kind(j.at("prediction_kind").get<std::string>());
        auto method = parse_alignment_method(j.at("alignment_method").get<std::string>());
        if (!kind || !method) throw Error(ErrorCode::ParseError, "report", "unknown kind or alignment method");
        r.prediction_kind = *kind;
        r.alignment_method = *method;
        r.pooling = j.at("pooling").get<std::string>() == "pixel" ? Pooling::Pixel : Pooling::Frame;
        r.config = eval_config_from_json(j.at("config"));
        for (const auto& f : j.at("per_frame")) {
            FrameResult fr;
            fr.frame_id = f.at("frame_id").get<std::string>();
            fr.category = f.at("category").get<std::string>();
            fr.metrics = metric_report_from_json(f.at("metrics"));
            fr.alignment = alignment_from_json(f.at("alignment"));
            fr.clamped_count = f.at("clamped_count").get<std::size_t>();
            if (f.contains("error") && !f["error"].is_null()) fr.error = f["error"].get<std::string>();
            r.per_frame.push_back(std::move(fr));
        }
        for (const auto& [name, row] : j.at("per_category").items()) r.per_category[name] = aggregate_row_from_json(row);
        r.overall = aggregate_row_from_json(j.at("overall"));
        return r;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, "report", e.what());
    }
}

inline AggregateReport parse_report(std::string_view text) {
    try {
        return aggregate_report_from_json(json::parse(text));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, "report", e.what());
    }
}

inline json to_json_value(const std::vector<LeaderboardEntry>& board) {
    json rows = json::array();
    for (const auto& e : board)
        rows.push_back(json{{"rank", e.rank}, {"team", e.team}, {"overall", to_json_value(e.overall)}});
    return rows;
}

// ---------------------------------------------------------------------------
// CSV and Markdown
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_number(const std::optional<double>& v, const char* spec = "%.9g", double factor = 1.0) {
    if (!v) return "";
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, *v * factor);
    return buf;
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

struct Column {
    const char* title;
    std::optional<double> MetricReport::*member;
    const char* spec;
    double factor;
};

// Table-1 style layout: fractions as percentages, distances in native units.
inline constexpr Column kLeaderboardColumns[] = {
    {"F-Score", &MetricReport::f_score, "%.2f", 100.0},   {"F-Edges", &MetricReport::f_edges, "%.2f", 100.0},
    {"MAE", &MetricReport::mae, "%.3f", 1.0},             {"RMSE", &MetricReport::rmse, "%.3f", 1.0},
    {"AbsRel", &MetricReport::absrel, "%.2f", 100.0},     {"Acc-Edges", &MetricReport::edge_acc, "%.2f", 1.0},
    {"Comp-Edges", &MetricReport::edge_comp, "%.2f", 1.0}, {"δ<1.25", &MetricReport::delta1, "%.2f", 100.0},
    {"δ<1.25²", &MetricReport::delta2, "%.2f", 100.0},    {"δ<1.25³", &MetricReport::delta3, "%.2f", 100.0},
};

}  // namespace detail

inline std::string leaderboard_markdown(const std::vector<LeaderboardEntry>& board) {
    std::ostringstream os;
    os << "| Rank | Team |";
    for (const auto& c : detail::kLeaderboardColumns) os << ' ' << c.title << " |";
    os << "\n|---:|---|";
    for (std::size_t i = 0; i < std::size(detail::kLeaderboardColumns); ++i) os << "---:|";
    os << '\n';
    for (const auto& e : board) {
        os << "| " << e.rank << " | " << e.team << " |";
        for (const auto& c : detail::kLeaderboardColumns)
            os << ' ' << detail::fmt_number(e.overall.*c.member, c.spec, c.factor) << " |";
        os << '\n';
    }
    return os.str();
}

/// CSV data rows: one per frame, one per category, one overall (plus header).
inline std::string report_csv(const AggregateReport& r) {
    std::ostringstream os;
    os << "scope,id,category,frames";
    for (const auto& f : kMetricFields) os << ',' << f.name;
    os << ",valid_pixel_count\n";
    auto row = [&](const char* scope, const std::string& id, const std::string& cat, std::size_t frames,
                   const MetricReport& m) {
        os << scope << ',' << detail::csv_field(id) << ',' << detail::csv_field(cat) << ',' << frames;
        for (const auto& f : kMetricFields) os << ',' << detail::fmt_number(m.*f.member, "%.17g");
        os << ',' << m.valid_pixel_count << '\n';
    };
    for (const auto& f : r.per_frame) row("frame", f.frame_id, f.category, 1, f.metrics);
    for (const auto& [cat, agg] : r.per_category) row("category", cat, cat, agg.frames, agg.mean);
    row("overall", "all", "", r.overall.frames, r.overall.mean);
    return os.str();
}

inline std::string emit_report(const AggregateReport& r, ReportFormat format) {
    switch (format) {
        case ReportFormat::Json: return to_json_value(r).dump(2) + "\n";
        case ReportFormat::Csv: return report_csv(r);
        case ReportFormat::Markdown: return leaderboard_markdown(rank({{r.team, r}}));
    }
    return {};
}

inline std::string emit_leaderboard(const std::vector<LeaderboardEntry>& board, ReportFormat format) {
    switch (format) {
        case ReportFormat::Json: return to_json_value(board).dump(2) + "\n";
        case ReportFormat::Markdown: return leaderboard_markdown(board);
        case ReportFormat::Csv: {
            std::ostringstream os;
            os << "rank,team";
            for (const auto& f : kMetricFields) os << ',' << f.name;
            os << '\n';
            for (const auto& e : board) {
                os << e.rank << ',' << detail::csv_field(e.team);
                for (const auto& f : kMetricFields) os << ',' << detail::fmt_number(e.overall.*f.member, "%.17g");
                os << '\n';
            }
            return os.str();
        }
    }
    return {};
}

}  // namespace mdec
