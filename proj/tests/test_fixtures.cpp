#include <gtest/gtest.h>

#include "mdec/align.hpp"
#include "mdec/fixtures.hpp"
#include "mdec/metrics_image.hpp"
#include "support.hpp"

using namespace mdec;
using namespace mdec::fixtures;

namespace {

AlignedDepth run_pipeline(const DepthRaster& pred, const DepthRaster& gt, PredictionKind kind) {
    EvalConfig cfg;
    auto depth = to_depth_space(resize_bilinear(pred, gt.width(), gt.height()), kind);
    return apply_alignment(depth, solve_lse_affine(depth, gt), cfg);
}

}  // namespace

TEST(Rng, StableStream) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
    Rng c(1);
    for (int i = 0; i < 1000; ++i) {
        double u = c.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
}

TEST(Scene, StepPlanes) {
    auto s = gen_scene({SceneKind::StepPlanes, 64, 48, 2.0, 8.0, 0});
    for (std::size_t y = 0; y < 48; ++y)
        for (std::size_t x = 0; x < 64; ++x) {
            EXPECT_EQ(s.gt.at(x, y), x < 32 ? 2.0 : 8.0);
            EXPECT_EQ(s.analytic_edges.edges.at(x, y), x == 31 || x == 32);
        }
    EXPECT_EQ(s.K.fx, 0.8 * 64);
    EXPECT_EQ(s.K.cx, 32.0);
    EXPECT_EQ(s.K.cy, 24.0);
}

TEST(Scene, SlantedPlaneMonotone) {
    auto s = gen_scene({SceneKind::SlantedPlane, 40, 30, 2.0, 8.0, 5});
    EXPECT_TRUE(s.analytic_edges.empty());
    for (std::size_t y = 0; y < 30; ++y)
        for (std::size_t x = 0; x + 1 < 40; ++x) EXPECT_LT(s.gt.at(x, y), s.gt.at(x + 1, y));
}

TEST(Scene, AllKindsDeterministicAndValid) {
    for (auto kind : kAllSceneKinds) {
        SceneSpec spec{kind, 50, 30, 1.5, 7.0, 99};
        auto a = gen_scene(spec), b = gen_scene(spec);
        EXPECT_EQ(a.gt, b.gt);
        EXPECT_EQ(a.analytic_edges.edges, b.analytic_edges.edges);
        EXPECT_EQ(a.gt.valid_count(), a.gt.size());
        for (double v : a.gt.values()) {
            EXPECT_GE(v, 1.5 - 1e-9);
            EXPECT_LE(v, 7.0 + 1e-9);
        }
        EXPECT_EQ(parse_scene_kind(to_string(kind)), kind);
    }
}

TEST(Scene, SphereAndBoxHaveEdges) {
    EXPECT_FALSE(gen_scene({SceneKind::SphereOnPlane, 64, 48, 2, 8, 1}).analytic_edges.empty());
    EXPECT_FALSE(gen_scene({SceneKind::IndoorBox, 64, 48, 2, 8, 1}).analytic_edges.empty());
}

TEST(Synth, MetricIdentity) {
    auto s = gen_scene({SceneKind::SphereOnPlane, 32, 24, 2, 8, 3});
    EXPECT_EQ(synth_prediction(s.gt, PredictionKind::Metric, 1, 0, 0, 0), s.gt);
}

TEST(Synth, AffineRecovered) {
    auto s = gen_scene({SceneKind::IndoorBox, 32, 24, 2, 8, 3});
    auto pred = synth_prediction(s.gt, PredictionKind::AffineInvariant, 2, 1, 0, 0);
    auto out = run_pipeline(pred, s.gt, PredictionKind::AffineInvariant);
    EXPECT_NEAR(out.alignment.scale, 0.5, 1e-12);
    EXPECT_NEAR(out.alignment.shift, -0.5, 1e-12);
    EXPECT_LT(image_metrics(out, s.gt, EvalConfig{}).mae, 1e-12);
}

TEST(Synth, DisparityRoundTrip) {
    auto s = gen_scene({SceneKind::StepPlanes, 32, 24, 2, 8, 3});
    auto pred = synth_prediction(s.gt, PredictionKind::Disparity, 1, 0, 0, 0);
    auto out = run_pipeline(pred, s.gt, PredictionKind::Disparity);
    EXPECT_LT(image_metrics(out, s.gt, EvalConfig{}).mae, 1e-6);
}

TEST(Synth, NoiseSeeded) {
    auto s = gen_scene({SceneKind::StepPlanes, 16, 16, 2, 8, 3});
    auto a = synth_prediction(s.gt, PredictionKind::Metric, 1, 0, 0.1, 7);
    auto b = synth_prediction(s.gt, PredictionKind::Metric, 1, 0, 0.1, 7);
    auto c = synth_prediction(s.gt, PredictionKind::Metric, 1, 0, 0.1, 8);
    EXPECT_EQ(a, b);
    EXPECT_FALSE(a == c);
}

TEST(Synth, Preconditions) {
    auto gt = DepthRaster::filled(2, 2, 3.0);
    EXPECT_THROW(synth_prediction(gt, PredictionKind::Disparity, 1, -5, 0, 0), Error);
    EXPECT_THROW(synth_prediction(gt, PredictionKind::Metric, 1, 0, -1, 0), Error);
    EXPECT_THROW(synth_prediction(gt, PredictionKind::Metric, std::nan(""), 0, 0, 0), Error);
}

TEST(Synth, InvalidGtStaysInvalid) {
    DepthRaster gt(2, 1, {2, 0}, {1, 0});
    auto p = synth_prediction(gt, PredictionKind::AffineInvariant, 2, 1, 0.1, 1);
    EXPECT_TRUE(p.is_valid(0, 0));
    EXPECT_FALSE(p.is_valid(1, 0));
}

TEST(Oracles, NnSmallCase) {
    PointCloud p, g;
    p.points = {{0, 0, 0}, {10, 0, 0}};
    g.points = {{0, 0, 0.05}};
    auto m = oracle_nn(p, g, 0.1);
    EXPECT_EQ(m.precision, 0.5);
    EXPECT_EQ(m.recall, 1.0);
}

TEST(Oracles, EdtSmallCase) {
    PixelMask m(3, 3);
    m.set(1, 1);
    auto f = oracle_edt(m);
    EXPECT_EQ(f.at(1, 1), 0.0);
    EXPECT_EQ(f.at(0, 1), 1.0);
    EXPECT_DOUBLE_EQ(f.at(0, 0), std::sqrt(2.0));
}

TEST(Dataset, DeterministicAndQuantised) {
    DatasetSpec spec;
    spec.frames = 5;
    spec.width = 40;
    spec.height = 30;
    auto a = make_dataset(spec), b = make_dataset(spec);
    ASSERT_EQ(a.gt.size(), 5u);
    EXPECT_EQ(a.gt, b.gt);
    EXPECT_EQ(a.predictions, b.predictions);
    EXPECT_EQ(a.manifest.frames[1].category, "natural");
    for (double v : a.gt[0].values())
        if (!std::isnan(v)) {
            EXPECT_EQ(v * 256.0, std::round(v * 256.0));
        }
}

TEST(Dataset, WrittenToDisk) {
    auto dir = testsupport::scratch_dir("dataset");
    DatasetSpec spec;
    spec.frames = 3;
    spec.width = 20;
    spec.height = 16;
    spec.half_resolution = true;
    auto ds = write_dataset(dir, spec);
    auto m = load_manifest(dir / "manifest.json");
    ASSERT_EQ(m.frames.size(), 3u);
    EXPECT_EQ(load_ground_truth(m.frames[2]), ds.gt[2]);
    auto sub = load_submission(dir / "submission.zip", m);
    EXPECT_EQ(sub.predictions.at("0000").width(), 10u);
    auto subdir = load_submission(dir / "submission", m);
    EXPECT_EQ(sub.predictions, subdir.predictions);
}

TEST(Dataset, SpecFromJson) {
    auto s = dataset_spec_from_json(nlohmann::json::parse(
        R"({"frames": 3, "width": 10, "prediction_kind": "disparity", "scale": 2, "alignment": "median"})"));
    EXPECT_EQ(s.frames, 3u);
    EXPECT_EQ(s.width, 10u);
    EXPECT_EQ(s.kind, PredictionKind::Disparity);
    EXPECT_EQ(s.scale, 2.0);
    EXPECT_EQ(s.alignment, AlignmentMethod::MedianScale);
}
