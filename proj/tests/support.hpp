#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mdec/core.hpp"
#include "mdec/fixtures.hpp"

namespace testsupport {

using mdec::DepthRaster;
using mdec::fixtures::Rng;

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("mdec_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

/// Random raster with values in [lo, hi] and roughly `invalid_frac` holes.
inline DepthRaster random_raster(Rng& rng, std::size_t w, std::size_t h, double lo, double hi,
                                 double invalid_frac = 0.0) {
    std::vector<double> v(w * h);
    std::vector<std::uint8_t> ok(w * h, 1);
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = rng.uniform(lo, hi);
        if (rng.uniform() < invalid_frac) ok[i] = 0;
    }
    return DepthRaster(w, h, std::move(v), std::move(ok));
}

inline mdec::PixelMask random_mask(Rng& rng, std::size_t w, std::size_t h, double density) {
    mdec::PixelMask m(w, h);
    for (auto& b : m.bits) b = rng.uniform() < density ? 1 : 0;
    return m;
}

/// Plain per-pixel loop over the joint-valid set.
struct LoopMetrics {
    double mae = 0, rmse = 0, absrel = 0, d1 = 0, d2 = 0, d3 = 0;
    std::size_t n = 0;
};

inline LoopMetrics loop_metrics(const DepthRaster& pred, const DepthRaster& gt, double base) {
    LoopMetrics m;
    double se = 0;
    for (std::size_t y = 0; y < gt.height(); ++y) {
        for (std::size_t x = 0; x < gt.width(); ++x) {
            if (!pred.is_valid(x, y) || !gt.is_valid(x, y)) continue;
            const double p = pred.at(x, y), d = gt.at(x, y);
            m.mae += std::fabs(p - d);
            se += (p - d) * (p - d);
            m.absrel += std::fabs(p - d) / d;
            const double r = std::max(p / d, d / p);
            m.d1 += r < base ? 1 : 0;
            m.d2 += r < base * base ? 1 : 0;
            m.d3 += r < base * base * base ? 1 : 0;
            ++m.n;
        }
    }
    const double n = static_cast<double>(m.n);
    m.mae /= n;
    m.rmse = std::sqrt(se / n);
    m.absrel /= n;
    m.d1 /= n;
    m.d2 /= n;
    m.d3 /= n;
    return m;
}

/// Sum of squared residuals of depth = s*p + t.
inline double sse(const std::vector<double>& p, const std::vector<double>& d, double s, double t) {
    double acc = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double r = s * p[i] + t - d[i];
        acc += r * r;
    }
    return acc;
}

}  // namespace testsupport
