#include <gtest/gtest.h>

#include <cmath>

#include "mdec/align.hpp"
#include "support.hpp"

using namespace mdec;
using testsupport::Rng;

namespace {

DepthRaster row(std::vector<double> v) {
    const std::size_t n = v.size();
    return DepthRaster::from_values(n, 1, std::move(v));
}

}  // namespace

TEST(Resize, IdentitySize) {
    Rng rng(1);
    auto r = testsupport::random_raster(rng, 7, 5, 0, 1, 0.2);
    EXPECT_EQ(resize_bilinear(r, 7, 5), r);
}

TEST(Resize, HalfPixelUpsample) {
    // Hand evaluation: u = (x + 0.5) * 2/4 - 0.5 gives -0.25, 0.25, 0.75, 1.25,
    // clamped to [0, 1]: values 1, 1.5, 2.5, 3.
    auto out = resize_bilinear(row({1, 3}), 4, 1);
    ASSERT_EQ(out.width(), 4u);
    EXPECT_DOUBLE_EQ(out.at(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(out.at(1, 0), 1.5);
    EXPECT_DOUBLE_EQ(out.at(2, 0), 2.5);
    EXPECT_DOUBLE_EQ(out.at(3, 0), 3.0);
}

TEST(Resize, ConstantStaysConstant) {
    Rng rng(2);
    for (int t = 0; t < 30; ++t) {
        const double c = rng.uniform(-10, 10);
        auto src = DepthRaster::filled(1 + rng.next() % 9, 1 + rng.next() % 9, c);
        auto out = resize_bilinear(src, 1 + rng.next() % 40, 1 + rng.next() % 40);
        for (auto v : out.values()) ASSERT_NEAR(v, c, 1e-12 * std::max(1.0, std::abs(c)));
        EXPECT_EQ(out.valid_count(), out.size());
    }
}

TEST(Resize, InvalidSourcePropagatesOnlyThroughWeightedTaps) {
    DepthRaster src(2, 1, {1.0, 0.0}, {1, 0});
    auto out = resize_bilinear(src, 4, 1);
    // Output 0 sits entirely on source pixel 0; the rest touch pixel 1.
    EXPECT_TRUE(out.is_valid(0, 0));
    EXPECT_FALSE(out.is_valid(1, 0));
    EXPECT_FALSE(out.is_valid(3, 0));
}

TEST(DepthSpace, DisparityInverts) {
    auto d = to_depth_space(row({0.5, 2.0}), PredictionKind::Disparity);
    EXPECT_EQ(d.at(0, 0), 2.0);
    EXPECT_EQ(d.at(1, 0), 0.5);
}

TEST(DepthSpace, ZeroDisparityInvalid) {
    auto d = to_depth_space(row({0.0, 2.0, -1.0}), PredictionKind::Disparity);
    EXPECT_FALSE(d.is_valid(0, 0));
    EXPECT_TRUE(d.is_valid(1, 0));
    EXPECT_FALSE(d.is_valid(2, 0));
    EXPECT_THROW(to_depth_space(row({0.0}), PredictionKind::Disparity), Error);
}

TEST(DepthSpace, PassThroughKinds) {
    auto p = row({-1.5, 0.25, 3.0});
    for (auto k : {PredictionKind::Metric, PredictionKind::AffineInvariant, PredictionKind::ScaleInvariant}) {
        auto d = to_depth_space(p, k);
        for (std::size_t i = 0; i < p.size(); ++i)
            EXPECT_EQ(std::bit_cast<std::uint64_t>(d.values()[i]), std::bit_cast<std::uint64_t>(p.values()[i]));
    }
}

TEST(Lse, ExactAffine) {
    auto a = solve_lse_affine(row({1, 2, 3}), row({3, 5, 7}));
    EXPECT_NEAR(a.scale, 2.0, 1e-12);
    EXPECT_NEAR(a.shift, 1.0, 1e-12);
    EXPECT_FALSE(a.degenerate);
    EXPECT_EQ(a.method, AlignmentMethod::LseAffine);
}

TEST(Lse, SelfAlignment) {
    Rng rng(4);
    auto r = testsupport::random_raster(rng, 9, 7, 0.5, 20, 0.1);
    auto a = solve_lse_affine(r, r);
    EXPECT_NEAR(a.scale, 1.0, 1e-12);
    EXPECT_NEAR(a.shift, 0.0, 1e-11);
}

TEST(Lse, GridSearchOracle) {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> p(16), d(16);
        for (int i = 0; i < 16; ++i) {
            p[i] = rng.uniform(-3, 3);
            d[i] = rng.uniform(0.5, 10);
        }
        auto a = solve_lse_affine(row(p), row(d));
        const double best = testsupport::sse(p, d, a.scale, a.shift);
        for (int i = -20; i <= 20; ++i)
            for (int j = -20; j <= 20; ++j)
                ASSERT_LE(best, testsupport::sse(p, d, a.scale + i * 1e-3, a.shift + j * 1e-3) * (1 + 1e-12));
    }
}

TEST(Lse, NormalEquationOrthogonality) {
    Rng rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        auto p = testsupport::random_raster(rng, 8, 8, -5, 5, 0.1);
        auto d = testsupport::random_raster(rng, 8, 8, 0.5, 50, 0.1);
        auto a = solve_lse_affine(p, d);
        double sr = 0, srp = 0, sd = 0, sdp = 0;
        auto m = joint_valid(p, d);
        for (std::size_t i = 0; i < m.bits.size(); ++i) {
            if (!m.bits[i]) continue;
            const double r = a.scale * p.values()[i] + a.shift - d.values()[i];
            sr += r;
            srp += r * p.values()[i];
            sd += std::abs(d.values()[i]);
            sdp += std::abs(d.values()[i] * p.values()[i]);
        }
        EXPECT_LE(std::abs(sr), 1e-6 * sd);
        EXPECT_LE(std::abs(srp), 1e-6 * sdp);
    }
}

TEST(Lse, AffineEquivariance) {
    Rng rng(7);
    EvalConfig cfg;
    for (int trial = 0; trial < 50; ++trial) {
        auto p = testsupport::random_raster(rng, 6, 6, 0, 4);
        auto d = testsupport::random_raster(rng, 6, 6, 1, 10);
        const double ka = rng.uniform(0.1, 10), kb = rng.uniform(-5, 5);
        std::vector<double> q(p.size());
        for (std::size_t i = 0; i < q.size(); ++i) q[i] = ka * p.values()[i] + kb;
        auto pq = DepthRaster::from_values(6, 6, q);
        auto a = solve_lse_affine(p, d);
        auto b = solve_lse_affine(pq, d);
        EXPECT_NEAR(b.scale, a.scale / ka, 1e-9 * std::abs(a.scale / ka) + 1e-12);
        EXPECT_NEAR(b.shift, a.shift - a.scale * kb / ka, 1e-8);
        auto da = apply_alignment(p, a, cfg).depth;
        auto db = apply_alignment(pq, b, cfg).depth;
        for (std::size_t i = 0; i < da.size(); ++i) EXPECT_NEAR(da.values()[i], db.values()[i], 1e-6);
    }
}

TEST(Lse, NeverWorseThanIdentity) {
    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> p(20), d(20);
        for (int i = 0; i < 20; ++i) {
            p[i] = rng.uniform(0, 10);
            d[i] = rng.uniform(0, 10);
        }
        auto a = solve_lse_affine(row(p), row(d));
        EXPECT_LE(testsupport::sse(p, d, a.scale, a.shift), testsupport::sse(p, d, 1, 0) * (1 + 1e-12));
    }
}

TEST(Lse, DegenerateConstantPrediction) {
    auto a = solve_lse_affine(row({2, 2, 2}), row({1, 2, 6}));
    EXPECT_TRUE(a.degenerate);
    EXPECT_EQ(a.scale, 1.0);
    EXPECT_NEAR(a.shift, 3.0 - 2.0, 1e-12);
}

TEST(Lse, TooFewPixels) {
    DepthRaster p(2, 1, {1, 2}, {1, 0});
    EXPECT_THROW(solve_lse_affine(p, row({1, 2})), Error);
}

TEST(Lse, MaskRestrictsFit) {
    PixelMask m(4, 1);
    m.set(0, 0);
    m.set(1, 0);
    auto a = solve_lse_affine(row({1, 2, 3, 4}), row({2, 4, 100, -100}), &m);
    EXPECT_NEAR(a.scale, 2.0, 1e-12);
    EXPECT_NEAR(a.shift, 0.0, 1e-12);
}

TEST(Lse, RobustRefitDropsOutlier) {
    std::vector<double> p, d;
    for (int i = 0; i < 30; ++i) {
        p.push_back(i);
        d.push_back(2.0 * i + 1.0);
    }
    d[15] += 500.0;
    auto plain = solve_lse_affine(row(p), row(d));
    auto robust = solve_lse_affine(row(p), row(d), nullptr, true);
    EXPECT_FALSE(plain.robust_refit);
    EXPECT_TRUE(robust.robust_refit);
    EXPECT_NEAR(robust.scale, 2.0, 1e-9);
    EXPECT_NEAR(robust.shift, 1.0, 1e-9);
    EXPECT_GT(std::abs(plain.shift - 1.0), 1.0);
}

TEST(Median, RatioOfMedians) {
    EXPECT_DOUBLE_EQ(median_scale(row({1, 2, 4}), row({2, 4, 8})).scale, 2.0);
    EXPECT_DOUBLE_EQ(median_scale(row({1, 3}), row({2, 10})).scale, 3.0);
    auto self = row({0.5, 7, 3, 9});
    auto a = median_scale(self, self);
    EXPECT_DOUBLE_EQ(a.scale, 1.0);
    EXPECT_EQ(a.shift, 0.0);
    EXPECT_EQ(a.method, AlignmentMethod::MedianScale);
}

TEST(Median, ScaleEquivariance) {
    Rng rng(9);
    for (int t = 0; t < 50; ++t) {
        auto p = testsupport::random_raster(rng, 5, 5, 0.1, 5);
        auto d = testsupport::random_raster(rng, 5, 5, 1, 10);
        const double k = rng.uniform(0.1, 10);
        std::vector<double> q(p.values().begin(), p.values().end());
        for (auto& v : q) v *= k;
        EXPECT_NEAR(median_scale(DepthRaster::from_values(5, 5, q), d).scale, median_scale(p, d).scale / k,
                    1e-12 * median_scale(p, d).scale / k);
    }
}

TEST(Median, RejectsNonPositive) {
    try {
        median_scale(row({-1, 2}), row({1, 2}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonPositivePrediction);
    }
}

TEST(Apply, IdentityOnlyClamps) {
    EvalConfig cfg;
    auto r = apply_alignment(row({0.5, 200.0, -1.0}), AffineAlignment::identity(), cfg);
    EXPECT_EQ(r.depth.at(0, 0), 0.5);
    EXPECT_EQ(r.depth.at(1, 0), cfg.depth_max);
    EXPECT_EQ(r.depth.at(2, 0), cfg.depth_min);
    EXPECT_EQ(r.clamped_count, 2u);
}

TEST(Apply, Arithmetic) {
    EvalConfig cfg;
    auto r = apply_alignment(row({0.4}), {2, 1, AlignmentMethod::LseAffine, false, false}, cfg);
    EXPECT_DOUBLE_EQ(r.depth.at(0, 0), 1.8);
    EXPECT_EQ(r.clamped_count, 0u);
}

TEST(Apply, NegativeClampedToEpsilon) {
    EvalConfig cfg;
    auto r = apply_alignment(row({2}), {1, -5, AlignmentMethod::LseAffine, false, false}, cfg);
    EXPECT_EQ(r.depth.at(0, 0), 0.001);
    EXPECT_EQ(r.clamped_count, 1u);
    EXPECT_TRUE(r.depth.is_valid(0, 0));
}

TEST(Apply, RejectsNonFinite) {
    EXPECT_THROW(apply_alignment(row({1}), {std::nan(""), 0, AlignmentMethod::LseAffine, false, false}, EvalConfig{}),
                 Error);
}
