#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "mdec/fixtures.hpp"
#include "mdec/metrics_edge.hpp"
#include "support.hpp"

using namespace mdec;
using testsupport::Rng;

namespace {

DistanceField brute_edt(const PixelMask& m) {
    DistanceField out{m.width, m.height, std::vector<double>(m.bits.size(), std::numeric_limits<double>::infinity())};
    for (std::size_t y = 0; y < m.height; ++y)
        for (std::size_t x = 0; x < m.width; ++x)
            for (std::size_t sy = 0; sy < m.height; ++sy)
                for (std::size_t sx = 0; sx < m.width; ++sx)
                    if (m.at(sx, sy))
                        out.dist[y * m.width + x] =
                            std::min(out.dist[y * m.width + x], std::hypot(double(x) - double(sx), double(y) - double(sy)));
    return out;
}

EdgeMask single(std::size_t w, std::size_t h, std::size_t x, std::size_t y) {
    EdgeMask e(w, h);
    e.edges.set(x, y);
    return e;
}

DepthRaster step_raster(std::size_t w, std::size_t h, double near, double far) {
    std::vector<double> v(w * h);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) v[y * w + x] = x < w / 2 ? near : far;
    return DepthRaster::from_values(w, h, std::move(v));
}

}  // namespace

TEST(Edges, ConstantDepthHasNone) {
    EXPECT_TRUE(log_depth_edges(DepthRaster::filled(32, 32, 4.0), EvalConfig{}).empty());
}

TEST(Edges, VerticalStepIsOnePixelLine) {
    const std::size_t w = 32, h = 32;
    auto d = step_raster(w, h, 1.0, 10.0);
    auto e = log_depth_edges(d, EvalConfig{});

    // Direct oracle: per interior row, the leftmost column of maximal
    // central-difference magnitude of ln(d).
    PixelMask want(w, h);
    for (std::size_t y = 1; y + 1 < h; ++y) {
        double best = 0;
        std::size_t at = 0;
        for (std::size_t x = 1; x + 1 < w; ++x) {
            const double g = std::abs(std::log(d.at(x + 1, y)) - std::log(d.at(x - 1, y)));
            if (g > best) {
                best = g;
                at = x;
            }
        }
        want.set(at, y);
    }
    EXPECT_EQ(e.edges, want);
    for (std::size_t y = 1; y + 1 < h; ++y) EXPECT_TRUE(e.edges.at(w / 2 - 1, y));
}

TEST(Edges, ScaleInvariant) {
    Rng rng(3);
    for (auto kind : fixtures::kAllSceneKinds) {
        auto scene = fixtures::gen_scene({kind, 48, 40, 1.5, 9.0, rng.next()});
        auto base = log_depth_edges(scene.gt, EvalConfig{});
        for (double k : {0.5, 2.0, 10.0, 0.013, 77.7}) {
            std::vector<double> v(scene.gt.values().begin(), scene.gt.values().end());
            for (auto& x : v) x *= k;
            auto scaled = DepthRaster(scene.gt.width(), scene.gt.height(), v,
                                      std::vector<std::uint8_t>(scene.gt.valid().begin(), scene.gt.valid().end()));
            EXPECT_EQ(log_depth_edges(scaled, EvalConfig{}).edges, base.edges) << fixtures::to_string(kind) << " k=" << k;
        }
    }
}

TEST(Edges, InvalidPixelsNeverEdges) {
    auto d = step_raster(20, 20, 2, 8);
    std::vector<double> v(d.values().begin(), d.values().end());
    std::vector<std::uint8_t> ok(v.size(), 1);
    for (std::size_t y = 0; y < 20; ++y) ok[y * 20 + 9] = 0;
    auto e = log_depth_edges(DepthRaster(20, 20, v, ok), EvalConfig{});
    for (std::size_t y = 0; y < 20; ++y)
        for (std::size_t x = 8; x <= 10; ++x) EXPECT_FALSE(e.edges.at(x, y));
}

TEST(Edges, AllInvalidThrows) {
    DepthRaster d(4, 4, std::vector<double>(16, 0.0), std::vector<std::uint8_t>(16, 0));
    EXPECT_THROW(log_depth_edges(d, EvalConfig{}), Error);
}

TEST(Edt, SingleSeedCorner) {
    auto f = edt(single(3, 3, 0, 0));
    EXPECT_DOUBLE_EQ(f.at(2, 2), 2 * std::sqrt(2.0));
    EXPECT_EQ(f.at(0, 0), 0.0);
    EXPECT_EQ(f.at(2, 0), 2.0);
}

TEST(Edt, SeedEverywhere) {
    PixelMask m(5, 4);
    for (auto& b : m.bits) b = 1;
    for (double d : edt(m).dist) EXPECT_EQ(d, 0.0);
}

TEST(Edt, NoSeedIsInfinite) {
    for (double d : edt(PixelMask(4, 3)).dist) EXPECT_TRUE(std::isinf(d));
}

TEST(Edt, MatchesBruteForce) {
    Rng rng(4);
    for (int t = 0; t < 100; ++t) {
        auto m = testsupport::random_mask(rng, 16, 16, rng.uniform(0.005, 0.3));
        auto got = edt(m);
        auto want = brute_edt(m);
        for (std::size_t i = 0; i < got.dist.size(); ++i) {
            if (std::isinf(want.dist[i]))
                ASSERT_TRUE(std::isinf(got.dist[i]));
            else
                ASSERT_NEAR(got.dist[i], want.dist[i], 1e-9);
        }
        auto lib = fixtures::oracle_edt(m);
        for (std::size_t i = 0; i < got.dist.size(); ++i)
            if (!std::isinf(want.dist[i])) {
                ASSERT_NEAR(lib.dist[i], want.dist[i], 1e-12);
            }
    }
}

TEST(Edt, Lipschitz) {
    Rng rng(5);
    for (int t = 0; t < 50; ++t) {
        const std::size_t w = 5 + rng.next() % 30, h = 5 + rng.next() % 30;
        auto m = testsupport::random_mask(rng, w, h, 0.03);
        m.set(rng.next() % w, rng.next() % h);
        auto f = edt(m);
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                if (x + 1 < w) {
                    ASSERT_LE(std::abs(f.at(x, y) - f.at(x + 1, y)), 1.0 + 1e-12);
                }
                if (y + 1 < h) {
                    ASSERT_LE(std::abs(f.at(x, y) - f.at(x, y + 1)), 1.0 + 1e-12);
                }
            }
    }
}

TEST(EdgeAccuracy, IdenticalMasks) {
    Rng rng(6);
    EdgeMask e(testsupport::random_mask(rng, 20, 20, 0.1), EdgeSource::GroundTruth);
    e.edges.set(3, 3);
    auto r = edge_accuracy_completion(e, e, 10);
    EXPECT_EQ(r.edge_acc, 0.0);
    ASSERT_TRUE(r.edge_comp);
    EXPECT_EQ(*r.edge_comp, 0.0);
}

TEST(EdgeAccuracy, ThreePixelsApart) {
    auto r = edge_accuracy_completion(single(20, 5, 2, 2), single(20, 5, 5, 2), 10);
    EXPECT_EQ(r.edge_acc, 3.0);
    EXPECT_EQ(*r.edge_comp, 3.0);
}

TEST(EdgeAccuracy, Truncated) {
    auto r = edge_accuracy_completion(single(40, 5, 2, 2), single(40, 5, 27, 2), 10);
    EXPECT_EQ(r.edge_acc, 10.0);
    EXPECT_EQ(*r.edge_comp, 10.0);
}

TEST(EdgeAccuracy, EmptySets) {
    auto r = edge_accuracy_completion(EdgeMask(8, 8), single(8, 8, 1, 1), 10);
    EXPECT_EQ(r.edge_acc, 10.0);
    EXPECT_EQ(*r.edge_comp, 10.0);
    auto s = edge_accuracy_completion(single(8, 8, 1, 1), EdgeMask(8, 8), 10);
    EXPECT_EQ(s.edge_acc, 10.0);
    EXPECT_FALSE(s.edge_comp);
}

TEST(EdgeAccuracy, BoundsAndSwapSymmetry) {
    Rng rng(7);
    for (int t = 0; t < 200; ++t) {
        EdgeMask a(testsupport::random_mask(rng, 24, 18, rng.uniform(0.001, 0.2)), EdgeSource::Prediction);
        EdgeMask b(testsupport::random_mask(rng, 24, 18, rng.uniform(0.001, 0.2)), EdgeSource::GroundTruth);
        a.edges.set(rng.next() % 24, rng.next() % 18);
        b.edges.set(rng.next() % 24, rng.next() % 18);
        const double theta = rng.uniform(1, 15);
        auto ab = edge_accuracy_completion(a, b, theta);
        auto ba = edge_accuracy_completion(b, a, theta);
        ASSERT_TRUE(ab.edge_comp && ba.edge_comp);
        EXPECT_GE(ab.edge_acc, 0.0);
        EXPECT_LE(ab.edge_acc, theta);
        EXPECT_GE(*ab.edge_comp, 0.0);
        EXPECT_LE(*ab.edge_comp, theta);
        EXPECT_EQ(ab.edge_acc, *ba.edge_comp);
        EXPECT_EQ(*ab.edge_comp, ba.edge_acc);
    }
}
