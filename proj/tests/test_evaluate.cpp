#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "mdec/evaluate.hpp"
#include "mdec/fixtures.hpp"
#include "mdec/report.hpp"
#include "support.hpp"

using namespace mdec;

namespace {

struct Challenge {
    fs::path dir;
    Manifest manifest;
    Submission submission;
};

Challenge make_challenge(const std::string& name, fixtures::DatasetSpec spec) {
    Challenge c;
    c.dir = testsupport::scratch_dir(name);
    fixtures::write_dataset(c.dir, spec);
    c.manifest = load_manifest(c.dir / "manifest.json");
    c.submission = load_submission(c.dir / "submission.zip", c.manifest);
    return c;
}

fixtures::DatasetSpec small_spec(std::size_t frames = 8) {
    fixtures::DatasetSpec s;
    s.frames = frames;
    s.width = 48;
    s.height = 36;
    s.scale = 0.5;
    s.shift = 0.25;
    return s;
}

AggregateReport with_overall(const std::string& team, std::optional<double> f, std::optional<double> absrel) {
    AggregateReport r;
    r.team = team;
    r.overall.mean.f_score = f;
    r.overall.mean.absrel = absrel;
    return r;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Evaluate, PerfectSubmission) {
    auto c = make_challenge("eval_perfect", small_spec());
    auto r = evaluate_submission(c.manifest, c.submission, EvalConfig{});
    ASSERT_EQ(r.per_frame.size(), 8u);
    EXPECT_LT(*r.overall.mean.mae, 1e-6);
    EXPECT_EQ(*r.overall.mean.f_score, 1.0);
    EXPECT_EQ(*r.overall.mean.delta1, 1.0);
    EXPECT_EQ(r.alignment_method, AlignmentMethod::LseAffine);
    for (const auto& f : r.per_frame) EXPECT_FALSE(f.error) << *f.error;
    EXPECT_EQ(r.per_category.size(), 4u);
}

TEST(Evaluate, DeterministicAcrossRunsAndWorkers) {
    auto spec = small_spec(6);
    spec.noise = 0.05;
    auto c = make_challenge("eval_determinism", spec);
    auto a = evaluate_submission(c.manifest, c.submission, EvalConfig{});
    auto b = evaluate_submission(c.manifest, c.submission, EvalConfig{});
    EvaluateOptions four;
    four.workers = 4;
    auto p = evaluate_submission(c.manifest, c.submission, EvalConfig{}, four);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, p);
    EXPECT_EQ(emit_report(a, ReportFormat::Json), emit_report(p, ReportFormat::Json));
}

TEST(Evaluate, MissingFrameBeforeEvaluation) {
    auto c = make_challenge("eval_missing", small_spec(3));
    c.submission.predictions.erase("0001");
    // A broken GT path would only surface during evaluation.
    c.manifest.frames[0].gt_path = c.dir / "does_not_exist.png";
    try {
        evaluate_submission(c.manifest, c.submission, EvalConfig{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MissingFrame);
        EXPECT_EQ(e.subject(), "0001");
    }
}

TEST(Evaluate, AlignmentChoice) {
    auto spec = small_spec(4);
    spec.kind = PredictionKind::AffineInvariant;
    spec.scale = 1.0;
    spec.shift = 2.0;
    spec.alignment = AlignmentMethod::MedianScale;
    // Median scaling leaves 2|m - d| / (m + 2) per pixel, so wide ranges show it.
    spec.near_min = 1.0;
    spec.near_max = 1.5;
    spec.far_ratio_min = 10.0;
    spec.far_ratio_max = 15.0;
    auto c = make_challenge("eval_align", spec);
    auto requested = evaluate_submission(c.manifest, c.submission, EvalConfig{});
    EXPECT_EQ(requested.alignment_method, AlignmentMethod::MedianScale);
    EXPECT_GT(*requested.overall.mean.mae, 0.5);
    EvaluateOptions lse;
    lse.alignment = AlignmentMethod::LseAffine;
    auto overridden = evaluate_submission(c.manifest, c.submission, EvalConfig{}, lse);
    EXPECT_LT(*overridden.overall.mean.mae, 1e-5);
}

TEST(Evaluate, HalfResolutionUpsampled) {
    auto spec = small_spec(4);
    spec.half_resolution = true;
    auto c = make_challenge("eval_half", spec);
    auto r = evaluate_submission(c.manifest, c.submission, EvalConfig{});
    EXPECT_EQ(r.per_frame[0].metrics.valid_pixel_count, 48u * 36u);
    EXPECT_GT(*r.overall.mean.delta3, 0.5);
}

TEST(Evaluate, MaeNotAboveRmseAndBounds) {
    auto spec = small_spec(8);
    spec.noise = 0.3;
    auto c = make_challenge("eval_bounds", spec);
    auto r = evaluate_submission(c.manifest, c.submission, EvalConfig{});
    for (const auto& f : r.per_frame) {
        ASSERT_TRUE(f.metrics.mae && f.metrics.rmse);
        EXPECT_LE(*f.metrics.mae, *f.metrics.rmse);
        for (auto v : {f.metrics.delta1, f.metrics.delta2, f.metrics.delta3, f.metrics.f_score}) {
            EXPECT_GE(*v, 0.0);
            EXPECT_LE(*v, 1.0);
        }
        if (f.metrics.edge_acc) {
            EXPECT_LE(*f.metrics.edge_acc, r.config.edge_trunc);
        }
    }
}

TEST(Evaluate, MissingMetricsExcludedAndCounted) {
    AggregateReport r;
    FrameResult a, b;
    a.frame_id = "a";
    a.category = "x";
    a.metrics.f_score = 0.4;
    a.metrics.f_edges = 0.2;
    b.frame_id = "b";
    b.category = "x";
    b.metrics.f_score = 0.8;
    r.per_frame = {a, b};
    aggregate(r);
    EXPECT_DOUBLE_EQ(*r.overall.mean.f_score, 0.6);
    EXPECT_DOUBLE_EQ(*r.overall.mean.f_edges, 0.2);
    EXPECT_EQ(r.overall.coverage.at("f_edges"), 1u);
    EXPECT_EQ(r.overall.coverage.at("f_score"), 2u);
    EXPECT_FALSE(r.overall.mean.mae);
}

TEST(Evaluate, DuplicatingFramesKeepsMeans) {
    auto spec = small_spec(4);
    spec.noise = 0.1;
    auto c = make_challenge("eval_linearity", spec);
    auto base = evaluate_submission(c.manifest, c.submission, EvalConfig{});
    AggregateReport doubled = base;
    doubled.per_frame.insert(doubled.per_frame.end(), base.per_frame.begin(), base.per_frame.end());
    aggregate(doubled);
    for (const auto& f : kMetricFields) {
        auto x = base.overall.mean.*f.member, y = doubled.overall.mean.*f.member;
        ASSERT_EQ(x.has_value(), y.has_value());
        if (x) {
            EXPECT_NEAR(*x, *y, 1e-12 * std::max(1.0, std::abs(*x))) << f.name;
        }
    }
}

TEST(Evaluate, PixelPooling) {
    AggregateReport r;
    r.pooling = Pooling::Pixel;
    FrameResult a, b;
    a.category = b.category = "c";
    a.metrics.mae = 1.0;
    a.metrics.rmse = 1.0;
    a.metrics.valid_pixel_count = 3;
    b.metrics.mae = 5.0;
    b.metrics.rmse = 5.0;
    b.metrics.valid_pixel_count = 1;
    r.per_frame = {a, b};
    aggregate(r);
    EXPECT_DOUBLE_EQ(*r.overall.mean.mae, 2.0);
    EXPECT_DOUBLE_EQ(*r.overall.mean.rmse, std::sqrt((3 * 1.0 + 25.0) / 4));
    r.pooling = Pooling::Frame;
    aggregate(r);
    EXPECT_DOUBLE_EQ(*r.overall.mean.mae, 3.0);
}

TEST(Rank, HeadlineOrder) {
    auto board = rank({{"B", with_overall("B", 0.2258, 0.3)}, {"A", with_overall("A", 0.2305, 0.3)}});
    ASSERT_EQ(board.size(), 2u);
    EXPECT_EQ(board[0].team, "A");
    EXPECT_EQ(board[1].team, "B");
    EXPECT_EQ(board[0].rank, 1u);
    EXPECT_EQ(board[1].rank, 2u);
}

TEST(Rank, AbsRelTieBreak) {
    auto board = rank({{"A", with_overall("A", 0.5, 0.30)}, {"B", with_overall("B", 0.5, 0.25)}});
    EXPECT_EQ(board[0].team, "B");
    EXPECT_EQ(board[1].team, "A");
    EXPECT_EQ(board[1].rank, 2u);
}

TEST(Rank, SingleEntryAndSharedRanks) {
    EXPECT_EQ(rank({{"solo", with_overall("solo", 0.1, 0.1)}})[0].rank, 1u);
    auto board = rank({{"c", with_overall("c", 0.5, 0.2)},
                       {"a", with_overall("a", 0.5, 0.2)},
                       {"b", with_overall("b", 0.9, 0.2)},
                       {"d", with_overall("d", std::nullopt, std::nullopt)}});
    EXPECT_EQ(board[0].team, "b");
    EXPECT_EQ(board[1].team, "a");
    EXPECT_EQ(board[2].team, "c");
    EXPECT_EQ(board[3].team, "d");
    EXPECT_EQ(board[1].rank, 2u);
    EXPECT_EQ(board[2].rank, 2u);
    EXPECT_EQ(board[3].rank, 4u);
}

TEST(Rank, PermutationInvariant) {
    testsupport::Rng rng(4);
    std::vector<std::pair<std::string, AggregateReport>> in;
    for (int i = 0; i < 12; ++i) {
        const std::string team = "team" + std::to_string(i);
        in.emplace_back(team, with_overall(team, std::round(rng.uniform(0, 4)) / 4, std::round(rng.uniform(0, 3)) / 3));
    }
    const auto want = rank(in);
    std::mt19937 shuffle(9);
    for (int t = 0; t < 50; ++t) {
        std::shuffle(in.begin(), in.end(), shuffle);
        auto got = rank(in);
        ASSERT_EQ(got.size(), want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            EXPECT_EQ(got[i].team, want[i].team);
            EXPECT_EQ(got[i].rank, want[i].rank);
        }
    }
}

TEST(Report, JsonRoundTripByteStable) {
    auto spec = small_spec(4);
    spec.noise = 0.02;
    auto c = make_challenge("report_json", spec);
    auto r = evaluate_submission(c.manifest, c.submission, EvalConfig{});
    const std::string text = emit_report(r, ReportFormat::Json);
    auto back = parse_report(text);
    EXPECT_EQ(back, r);
    EXPECT_EQ(emit_report(back, ReportFormat::Json), text);
}

TEST(Report, CsvRowCount) {
    auto c = make_challenge("report_csv", small_spec(6));
    auto r = evaluate_submission(c.manifest, c.submission, EvalConfig{});
    const std::string csv = emit_report(r, ReportFormat::Csv);
    EXPECT_EQ(count_lines(csv), 1 + r.per_frame.size() + r.per_category.size() + 1);
}

TEST(Report, MarkdownRows) {
    std::vector<std::pair<std::string, AggregateReport>> in{{"A", with_overall("A", 0.2305, 0.1)},
                                                            {"B", with_overall("B", 0.2258, 0.1)},
                                                            {"C", with_overall("C", 0.1, 0.1)}};
    const std::string md = emit_leaderboard(rank(in), ReportFormat::Markdown);
    std::istringstream is(md);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(is, line)) lines.push_back(line);
    ASSERT_EQ(lines.size(), 2u + 3u);
    EXPECT_NE(lines[0].find("F-Score"), std::string::npos);
    EXPECT_NE(lines[2].find("| A |"), std::string::npos);
    EXPECT_NE(lines[2].find("23.05"), std::string::npos);
    EXPECT_NE(lines[3].find("22.58"), std::string::npos);
}

TEST(Report, ConfigDigestStable) {
    EvalConfig a, b;
    EXPECT_EQ(config_digest(a), config_digest(b));
    EXPECT_EQ(config_digest(a).size(), 64u);
    b.fscore_tau = 0.2;
    EXPECT_NE(config_digest(a), config_digest(b));
    EXPECT_EQ(eval_config_from_json(to_json_value(b)), b);
}

TEST(Report, EvalConfigJsonValidates) {
    auto j = to_json_value(EvalConfig{});
    j["fscore_tau"] = 0.0;
    EXPECT_THROW(eval_config_from_json(j), Error);
}
