// mdec: evaluate, rank, generate fixtures, serve.

#include <csignal>
#include <iostream>
#include <mutex>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mdec/evaluate.hpp"
#include "mdec/fixtures.hpp"
#include "mdec/png.hpp"
#include "mdec/report.hpp"
#include "mdec/server_http.hpp"

namespace {

using namespace mdec;

constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

nlohmann::json read_json_file(const fs::path& path) {
    Bytes data = read_file(path);
    try {
        return nlohmann::json::parse(data.begin(), data.end());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string(), e.what());
    }
}

void emit(const std::string& text, const std::string& out) {
    if (out.empty() || out == "-")
        std::cout << text;
    else
        write_file(out, std::string_view(text));
}

ReportFormat format_or_throw(const std::string& s) {
    auto f = parse_report_format(s);
    if (!f) throw Error(ErrorCode::InvalidConfig, "format", "expected json, csv or markdown");
    return *f;
}

struct EvaluateArgs {
    std::string manifest, submission, align, config, out, format = "json", pooling = "frame", dump_edges;
    std::size_t workers = 1;
};

int run_evaluate(const EvaluateArgs& a) {
    EvalConfig cfg;
    if (!a.config.empty()) cfg = eval_config_from_json(read_json_file(a.config));
    validate_config(cfg);
    const ReportFormat fmt = format_or_throw(a.format);

    EvaluateOptions opt;
    opt.workers = a.workers;
    if (a.pooling == "pixel")
        opt.pooling = Pooling::Pixel;
    else if (a.pooling != "frame")
        throw Error(ErrorCode::InvalidConfig, "pooling", "expected frame or pixel");
    if (!a.align.empty()) {
        auto m = parse_alignment_method(a.align);
        if (!m) throw Error(ErrorCode::InvalidConfig, "align", "expected lse or median");
        opt.alignment = m;
    }

    std::mutex io_mu;
    if (!a.dump_edges.empty()) {
        fs::create_directories(a.dump_edges);
        opt.edge_sink = [&](const FrameRecord& frame, const FrameEdges& e) {
            auto gt = png::encode_mask(e.gt.edges);
            auto pred = png::encode_mask(e.pred.edges);
            std::lock_guard lock(io_mu);
            write_file(fs::path(a.dump_edges) / (frame.frame_id + "_gt_edges.png"), gt);
            write_file(fs::path(a.dump_edges) / (frame.frame_id + "_pred_edges.png"), pred);
        };
    }

    const Manifest manifest = load_manifest(a.manifest);
    const Submission sub = load_submission(a.submission, manifest);
    for (const auto& w : sub.warnings) std::cerr << "warning: " << w << "\n";
    const AggregateReport report = evaluate_submission(manifest, sub, cfg, opt);
    emit(emit_report(report, fmt), a.out);
    return 0;
}

int run_rank(const std::vector<std::string>& inputs, const std::string& format, const std::string& out) {
    std::vector<std::pair<std::string, AggregateReport>> reports;
    for (const auto& path : inputs) {
        Bytes data = read_file(path);
        AggregateReport r = parse_report(std::string_view(reinterpret_cast<const char*>(data.data()), data.size()));
        reports.emplace_back(r.team, std::move(r));
    }
    emit(emit_leaderboard(rank(reports), format_or_throw(format)), out);
    return 0;
}

struct FixtureArgs {
    std::string spec, out, kind, align;
    std::optional<std::size_t> frames, width, height;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> team;
    std::optional<double> scale, shift, noise;
    bool half = false;
};

int run_gen_fixtures(const FixtureArgs& a) {
    fixtures::DatasetSpec s;
    if (!a.spec.empty()) s = fixtures::dataset_spec_from_json(read_json_file(a.spec));
    if (a.frames) s.frames = *a.frames;
    if (a.width) s.width = *a.width;
    if (a.height) s.height = *a.height;
    if (a.seed) s.seed = *a.seed;
    if (a.team) s.team = *a.team;
    if (a.scale) s.scale = *a.scale;
    if (a.shift) s.shift = *a.shift;
    if (a.noise) s.noise = *a.noise;
    if (a.half) s.half_resolution = true;
    if (!a.kind.empty()) {
        auto k = parse_prediction_kind(a.kind);
        if (!k) throw Error(ErrorCode::InvalidConfig, "kind", "unknown prediction kind");
        s.kind = *k;
    }
    if (!a.align.empty()) {
        auto m = parse_alignment_method(a.align);
        if (!m) throw Error(ErrorCode::InvalidConfig, "align", "expected lse or median");
        s.alignment = m;
    }
    fixtures::write_dataset(a.out, s);
    std::cout << "wrote " << s.frames << " frames to " << a.out << "\n";
    return 0;
}

httplib::Server* g_http = nullptr;

int run_serve(const std::string& config_path) {
    server::ServiceConfig cfg = server::load_service_config(config_path);
    server::ChallengeService svc(cfg);
    httplib::Server http;
    server::register_routes(http, svc);
    g_http = &http;
    std::signal(SIGINT, [](int) { if (g_http) g_http->stop(); });
    std::signal(SIGTERM, [](int) { if (g_http) g_http->stop(); });
    std::cerr << "listening on " << cfg.host << ":" << cfg.port << "\n";
    if (!http.listen(cfg.host, cfg.port)) throw Error(ErrorCode::Io, cfg.host, "cannot bind port " + std::to_string(cfg.port));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monocular depth evaluation toolkit"};
    app.require_subcommand(1);

    EvaluateArgs ev;
    auto* evaluate = app.add_subcommand("evaluate", "Evaluate a submission against a manifest");
    evaluate->add_option("--manifest", ev.manifest, "manifest.json")->required();
    evaluate->add_option("--submission", ev.submission, "submission directory or .zip")->required();
    evaluate->add_option("--align", ev.align, "lse or median (default: as requested by the submission, else lse)");
    evaluate->add_option("--config", ev.config, "evaluation config JSON");
    evaluate->add_option("--out", ev.out, "output path (default stdout)");
    evaluate->add_option("--format", ev.format, "json, csv or markdown");
    evaluate->add_option("--pooling", ev.pooling, "frame or pixel");
    evaluate->add_option("--workers", ev.workers, "frame worker threads");
    evaluate->add_option("--dump-edges", ev.dump_edges, "write per-frame edge masks as PNG into this directory");

    std::vector<std::string> rank_inputs;
    std::string rank_format = "markdown", rank_out;
    auto* rankcmd = app.add_subcommand("rank", "Rank evaluated reports");
    rankcmd->add_option("reports", rank_inputs, "report JSON files")->required();
    rankcmd->add_option("--format", rank_format, "json, csv or markdown");
    rankcmd->add_option("--out", rank_out, "output path (default stdout)");

    FixtureArgs fx;
    auto* gen = app.add_subcommand("gen-fixtures", "Write a synthetic challenge to disk");
    gen->add_option("--spec", fx.spec, "dataset spec JSON");
    gen->add_option("--out", fx.out, "output directory")->required();
    gen->add_option("--frames", fx.frames);
    gen->add_option("--width", fx.width);
    gen->add_option("--height", fx.height);
    gen->add_option("--seed", fx.seed);
    gen->add_option("--team", fx.team);
    gen->add_option("--kind", fx.kind, "disparity, affine_invariant, scale_invariant or metric");
    gen->add_option("--scale", fx.scale);
    gen->add_option("--shift", fx.shift);
    gen->add_option("--noise", fx.noise);
    gen->add_option("--align", fx.align, "alignment requested in submission.json");
    gen->add_flag("--half-resolution", fx.half, "write predictions at half resolution");

    std::string serve_config;
    auto* serve = app.add_subcommand("serve", "Run the challenge service");
    serve->add_option("--config", serve_config, "server config JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitValidation;
    }

    try {
        if (*evaluate) return run_evaluate(ev);
        if (*rankcmd) return run_rank(rank_inputs, rank_format, rank_out);
        if (*gen) return run_gen_fixtures(fx);
        if (*serve) return run_serve(serve_config);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code() == ErrorCode::Io ? kExitIo : kExitValidation;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitValidation;
}
