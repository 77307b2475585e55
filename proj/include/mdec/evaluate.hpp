#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mdec/align.hpp"
#include "mdec/core.hpp"
#include "mdec/ingest.hpp"
#include "mdec/metrics_3d.hpp"
#include "mdec/metrics_edge.hpp"
#include "mdec/metrics_image.hpp"

namespace mdec {

enum class Pooling { Frame, Pixel };

inline const char* to_string(Pooling p) { return p == Pooling::Frame ? "frame" : "pixel"; }

struct FrameResult {
    std::string frame_id;
    std::string category;
    MetricReport metrics;
    AffineAlignment alignment;
    std::size_t clamped_count = 0;
    std::optional<std::string> error;  ///< why the frame (or part of it) has missing values

    friend bool operator==(const FrameResult&, const FrameResult&) = default;
};

struct AggregateRow {
    MetricReport mean;
    std::map<std::string, std::size_t> coverage;  ///< frames contributing to each metric
    std::size_t frames = 0;

    friend bool operator==(const AggregateRow&, const AggregateRow&) = default;
};

struct AggregateReport {
    std::string team;
    PredictionKind prediction_kind = PredictionKind::Metric;
    AlignmentMethod alignment_method = AlignmentMethod::LseAffine;
    Pooling pooling = Pooling::Frame;
    EvalConfig config;
    std::vector<FrameResult> per_frame;  ///< manifest order
    std::map<std::string, AggregateRow> per_category;
    AggregateRow overall;

    friend bool operator==(const AggregateReport&, const AggregateReport&) = default;
};

/// Edge masks of one frame, handed to an optional debug sink.
struct FrameEdges {
    EdgeMask gt;
    EdgeMask pred;
};

/// Full per-frame protocol: GT masking, bilinear resize to GT resolution,
/// conversion to depth space, alignment, clamping, then image, pointcloud and
/// edge metrics. Failures inside a metric group leave that group missing.
inline FrameResult evaluate_frame(const DepthRaster& gt_raw, const DepthRaster& prediction, const CameraIntrinsics& K,
                                  PredictionKind kind, AlignmentMethod method, const EvalConfig& cfg,
                                  FrameEdges* edges_out = nullptr) {
    FrameResult r;
    const DepthRaster gt = mask_ground_truth(gt_raw, cfg);
    AlignedDepth aligned;
    try {
        const DepthRaster resized = resize_bilinear(prediction, gt.width(), gt.height());
        const DepthRaster depth = to_depth_space(resized, kind);
        AffineAlignment a;
        switch (method) {
            case AlignmentMethod::LseAffine: a = solve_lse_affine(depth, gt, nullptr, cfg.robust_refit); break;
            case AlignmentMethod::MedianScale: a = median_scale(depth, gt); break;
            case AlignmentMethod::Identity: a = AffineAlignment::identity(); break;
        }
        aligned = apply_alignment(depth, a, cfg);
    } catch (const Error& e) {
        r.error = e.what();
        return r;
    }
    r.alignment = aligned.alignment;
    r.clamped_count = aligned.clamped_count;

    // Pixels without GT take no part in any metric.
    const DepthRaster pred_eval = restrict_to(aligned.depth, joint_valid(aligned.depth, gt));
    auto note = [&r](const Error& e) { r.error = r.error ? *r.error + "; " + e.what() : std::string(e.what()); };

    try {
        const ImageMetrics im = image_metrics(pred_eval, gt, cfg);
        r.metrics.mae = im.mae;
        r.metrics.rmse = im.rmse;
        r.metrics.absrel = im.absrel;
        r.metrics.delta1 = im.delta[0];
        r.metrics.delta2 = im.delta[1];
        r.metrics.delta3 = im.delta[2];
        r.metrics.valid_pixel_count = im.pixel_count;
    } catch (const Error& e) {
        note(e);
    }

    if (gt.valid_count() > 0) {
        r.metrics.f_score = fscore(backproject(pred_eval, K), backproject(gt, K), cfg.fscore_tau).f_score;
        try {
            EdgeMask gt_edges = log_depth_edges(gt, cfg, EdgeSource::GroundTruth);
            EdgeMask pred_edges = pred_eval.valid_count() > 0
                                      ? log_depth_edges(pred_eval, cfg, EdgeSource::Prediction)
                                      : EdgeMask(gt.width(), gt.height(), EdgeSource::Prediction);
            if (auto fe = f_edges(pred_eval, gt, gt_edges.edges, K, cfg.fscore_tau)) r.metrics.f_edges = fe->f_score;
            auto ac = edge_accuracy_completion(pred_edges, gt_edges, cfg.edge_trunc);
            r.metrics.edge_acc = ac.edge_acc;
            r.metrics.edge_comp = ac.edge_comp;
            if (edges_out) *edges_out = {std::move(gt_edges), std::move(pred_edges)};
        } catch (const Error& e) {
            note(e);
        }
    }
    return r;
}

namespace detail {

inline void accumulate_row(AggregateRow& row, const std::vector<const FrameResult*>& frames, Pooling pooling) {
    row = AggregateRow{};
    row.frames = frames.size();
    for (const auto& field : kMetricFields) {
        const bool image_metric = std::string_view(field.name) != "f_score" && std::string_view(field.name) != "f_edges" &&
                                  std::string_view(field.name) != "edge_acc" && std::string_view(field.name) != "edge_comp";
        const bool pooled = pooling == Pooling::Pixel && image_metric;
        const bool quadratic = std::string_view(field.name) == "rmse";
        double sum = 0.0, weight = 0.0;
        std::size_t n = 0;
        for (const FrameResult* f : frames) {
            const auto& v = f->metrics.*field.member;
            if (!v) continue;
            const double w = pooled ? static_cast<double>(f->metrics.valid_pixel_count) : 1.0;
            sum += pooled && quadratic ? w * (*v) * (*v) : w * (*v);
            weight += w;
            ++n;
        }
        row.coverage[field.name] = n;
        if (n > 0 && weight > 0.0) row.mean.*field.member = pooled && quadratic ? std::sqrt(sum / weight) : sum / weight;
    }
    for (const FrameResult* f : frames) row.mean.valid_pixel_count += f->metrics.valid_pixel_count;
    if (row.mean.mae && row.mean.rmse) row.mean.rmse = std::max(*row.mean.rmse, *row.mean.mae);
}

}  // namespace detail

/// Means over frames (manifest order) for each metric where it is defined,
/// per category and overall.
inline void aggregate(AggregateReport& report) {
    std::vector<const FrameResult*> all;
    std::map<std::string, std::vector<const FrameResult*>> by_cat;
    for (const auto& f : report.per_frame) {
        all.push_back(&f);
        by_cat[f.category].push_back(&f);
    }
    detail::accumulate_row(report.overall, all, report.pooling);
    report.per_category.clear();
    for (const auto& [cat, frames] : by_cat) detail::accumulate_row(report.per_category[cat], frames, report.pooling);
}

struct EvaluateOptions {
    /// Overrides the alignment requested in submission.json. Default LSE.
    std::optional<AlignmentMethod> alignment;
    std::size_t workers = 1;
    Pooling pooling = Pooling::Frame;
    /// Called once per frame (from worker threads) with the frame's edge masks.
    std::function<void(const FrameRecord&, const FrameEdges&)> edge_sink;
};

/// Evaluates every manifest frame; frames run on a worker pool and results are
/// merged by manifest index, so output bits do not depend on scheduling.
inline AggregateReport evaluate_submission(const Manifest& manifest, const Submission& submission, const EvalConfig& cfg,
                                           const EvaluateOptions& options = {}) {
    validate_config(cfg);
    for (const auto& frame : manifest.frames)
        if (!submission.predictions.count(frame.frame_id))
            throw Error(ErrorCode::MissingFrame, frame.frame_id, "no prediction in submission");

    AggregateReport report;
    report.team = submission.meta.team;
    report.prediction_kind = submission.meta.prediction_kind;
    report.alignment_method =
        options.alignment.value_or(submission.meta.alignment.value_or(AlignmentMethod::LseAffine));
    report.pooling = options.pooling;
    report.config = cfg;
    report.per_frame.resize(manifest.frames.size());

    std::vector<std::optional<Error>> failures(manifest.frames.size());
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        for (std::size_t i = next++; i < manifest.frames.size(); i = next++) {
            const FrameRecord& frame = manifest.frames[i];
            try {
                const DepthRaster gt = load_ground_truth(frame, manifest.depth_divisor);
                FrameEdges edges;
                FrameResult r = evaluate_frame(gt, submission.predictions.at(frame.frame_id), frame.intrinsics,
                                               report.prediction_kind, report.alignment_method, cfg,
                                               options.edge_sink ? &edges : nullptr);
                r.frame_id = frame.frame_id;
                r.category = frame.category;
                if (options.edge_sink) options.edge_sink(frame, edges);
                report.per_frame[i] = std::move(r);
            } catch (const Error& e) {
                failures[i] = e;
            }
        }
    };
    const std::size_t workers = std::max<std::size_t>(1, std::min(options.workers, manifest.frames.size()));
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    for (auto& f : failures)
        if (f) throw *f;

    aggregate(report);
    return report;
}

// ---------------------------------------------------------------------------
// Ranking
// ---------------------------------------------------------------------------

struct LeaderboardEntry {
    std::size_t rank = 0;  ///< 1-based, standard competition ranking
    std::string team;
    MetricReport overall;
};

namespace detail {

// Missing values sort last in either direction.
inline int compare_desc(const std::optional<double>& a, const std::optional<double>& b) {
    if (a && b) return *a > *b ? -1 : (*a < *b ? 1 : 0);
    if (a) return -1;
    if (b) return 1;
    return 0;
}

inline int compare_asc(const std::optional<double>& a, const std::optional<double>& b) {
    if (a && b) return *a < *b ? -1 : (*a > *b ? 1 : 0);
    if (a) return -1;
    if (b) return 1;
    return 0;
}

inline int compare_score(const MetricReport& a, const MetricReport& b) {
    if (int c = compare_desc(a.f_score, b.f_score)) return c;
    return compare_asc(a.absrel, b.absrel);
}

// Remaining metrics only make the order total; they never affect rank numbers.
inline int compare_rest(const MetricReport& a, const MetricReport& b) {
    for (const auto& field : kMetricFields)
        if (int c = compare_asc(a.*field.member, b.*field.member)) return c;
    return a.valid_pixel_count < b.valid_pixel_count ? -1 : (a.valid_pixel_count > b.valid_pixel_count ? 1 : 0);
}

}  // namespace detail

/// Descending overall F-Score, ties broken by ascending AbsRel, then by team
/// name. Entries equal on F-Score and AbsRel share a rank number.
inline std::vector<LeaderboardEntry> rank(const std::vector<std::pair<std::string, AggregateReport>>& reports) {
    std::vector<LeaderboardEntry> board;
    board.reserve(reports.size());
    for (const auto& [team, report] : reports) board.push_back({0, team, report.overall.mean});
    std::sort(board.begin(), board.end(), [](const LeaderboardEntry& a, const LeaderboardEntry& b) {
        if (int c = detail::compare_score(a.overall, b.overall)) return c < 0;
        if (a.team != b.team) return a.team < b.team;
        return detail::compare_rest(a.overall, b.overall) < 0;
    });
    for (std::size_t i = 0; i < board.size(); ++i) {
        board[i].rank = (i > 0 && detail::compare_score(board[i - 1].overall, board[i].overall) == 0)
                            ? board[i - 1].rank
                            : i + 1;
    }
    return board;
}

}  // namespace mdec
