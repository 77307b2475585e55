#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "mdec/core.hpp"

namespace mdec {

enum class EdgeSource { GroundTruth, Prediction };

/// Depth-boundary pixels of one raster. Edge pixels are always valid pixels
/// of the raster they were extracted from.
struct EdgeMask {
    PixelMask edges;
    EdgeSource source = EdgeSource::GroundTruth;

    EdgeMask() = default;
    EdgeMask(std::size_t w, std::size_t h, EdgeSource src = EdgeSource::GroundTruth) : edges(w, h), source(src) {}
    EdgeMask(PixelMask m, EdgeSource src) : edges(std::move(m)), source(src) {}

    std::size_t width() const noexcept { return edges.width; }
    std::size_t height() const noexcept { return edges.height; }
    std::size_t count() const noexcept { return edges.count(); }
    bool empty() const noexcept { return count() == 0; }
};

struct DistanceField {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> dist;  ///< +inf everywhere when there was no seed

    double at(std::size_t x, std::size_t y) const { return dist[y * width + x]; }
};

namespace detail {

// Snap to a 2^-32 grid. Boundary extraction must give the same mask for d and
// k*d; after normalising by a reference depth the two log maps differ only by
// rounding noise, which the snap removes.
inline double snap(double v) {
    constexpr double kGrid = 4294967296.0;
    return std::round(v * kGrid) / kGrid;
}

// Linear-interpolated quantile of the first `end - begin` values, which
// nth_element may reorder. Used with increasing q on one buffer.
inline double quantile(std::vector<double>& v, std::size_t from, double q) {
    if (v.empty()) return 0.0;
    const double h = q * static_cast<double>(v.size() - 1);
    const auto lo = std::max(from, static_cast<std::size_t>(std::floor(h)));
    std::nth_element(v.begin() + static_cast<std::ptrdiff_t>(from), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
    const double a = v[lo];
    if (lo + 1 >= v.size()) return a;
    const double b = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo) + 1, v.end());
    return a + (h - static_cast<double>(lo)) * (b - a);
}

}  // namespace detail

/// Canny-style boundaries on ln(depth):
///  1. Gaussian smoothing (sigma = cfg.edge_sigma), renormalised over valid pixels;
///  2. central-difference gradients;
///  3. non-maximum suppression along the gradient quantised to 4 directions;
///  4. hysteresis at the cfg.edge_low_q / cfg.edge_high_q magnitude quantiles,
///     8-connected.
/// Pixels on the image border or next to an invalid pixel are never edges.
inline EdgeMask log_depth_edges(const DepthRaster& depth, const EvalConfig& cfg,
                                EdgeSource source = EdgeSource::GroundTruth) {
    const std::size_t w = depth.width();
    const std::size_t h = depth.height();
    const std::size_t n = w * h;

    std::vector<std::uint8_t> ok(n, 0);
    double ref = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (depth.valid()[i] && depth.values()[i] > 0.0) {
            ok[i] = 1;
            ref = std::max(ref, depth.values()[i]);
        }
    }
    if (ref == 0.0) throw Error(ErrorCode::EmptyMask, "log_depth_edges", "no valid pixels");

    std::vector<double> logd(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        if (ok[i]) logd[i] = detail::snap(std::log(depth.values()[i] / ref));

    // Separable normalised convolution: blur (mask * L) and mask, then divide.
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * cfg.edge_sigma)));
    std::vector<double> kernel(2 * radius + 1);
    for (int j = -radius; j <= radius; ++j)
        kernel[j + radius] = std::exp(-0.5 * j * j / (cfg.edge_sigma * cfg.edge_sigma));

    std::vector<double> num_h(n, 0.0), den_h(n, 0.0);
    const auto r = static_cast<std::size_t>(radius);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double num = 0.0, den = 0.0;
            if (x >= r && x + r < w) {
                // Interior: invalid taps hold logd = 0 and contribute nothing.
                const std::size_t k0 = y * w + x - r;
                for (std::size_t j = 0; j < kernel.size(); ++j) {
                    num += kernel[j] * logd[k0 + j];
                    den += ok[k0 + j] ? kernel[j] : 0.0;
                }
                num_h[y * w + x] = num;
                den_h[y * w + x] = den;
                continue;
            }
            for (int j = -radius; j <= radius; ++j) {
                const auto xx = static_cast<std::ptrdiff_t>(x) + j;
                if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(w)) continue;
                const std::size_t k = y * w + static_cast<std::size_t>(xx);
                if (!ok[k]) continue;
                num += kernel[j + radius] * logd[k];
                den += kernel[j + radius];
            }
            num_h[y * w + x] = num;
            den_h[y * w + x] = den;
        }
    }
    std::vector<double> smooth(n, 0.0);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double num = 0.0, den = 0.0;
            for (int j = -radius; j <= radius; ++j) {
                const auto yy = static_cast<std::ptrdiff_t>(y) + j;
                if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(h)) continue;
                const std::size_t k = static_cast<std::size_t>(yy) * w + x;
                num += kernel[j + radius] * num_h[k];
                den += kernel[j + radius] * den_h[k];
            }
            smooth[y * w + x] = den > 0.0 ? num / den : 0.0;
        }
    }

    // A gradient exists where the pixel and its 4-neighbours are valid; an
    // edge candidate additionally needs its full 8-neighbourhood valid.
    std::vector<double> gx(n, 0.0), gy(n, 0.0), mag(n, 0.0);
    std::vector<std::uint8_t> has_grad(n, 0), eligible(n, 0);
    for (std::size_t y = 1; y + 1 < h; ++y) {
        for (std::size_t x = 1; x + 1 < w; ++x) {
            const std::size_t i = y * w + x;
            if (!ok[i] || !ok[i - 1] || !ok[i + 1] || !ok[i - w] || !ok[i + w]) continue;
            gx[i] = 0.5 * (smooth[i + 1] - smooth[i - 1]);
            gy[i] = 0.5 * (smooth[i + w] - smooth[i - w]);
            mag[i] = detail::snap(std::sqrt(gx[i] * gx[i] + gy[i] * gy[i]));
            has_grad[i] = 1;
            eligible[i] = ok[i - w - 1] && ok[i - w + 1] && ok[i + w - 1] && ok[i + w + 1];
        }
    }

    std::vector<double> mags;
    mags.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        if (eligible[i]) mags.push_back(mag[i]);
    // validate_config guarantees low_q < high_q, so the second selection can
    // start where the first one left its pivot.
    const double low = detail::quantile(mags, 0, cfg.edge_low_q);
    const std::size_t pivot = mags.empty() ? 0 : static_cast<std::size_t>(std::floor(cfg.edge_low_q * double(mags.size() - 1)));
    const double high = detail::quantile(mags, pivot, cfg.edge_high_q);

    // Non-maximum suppression. Ties along the gradient resolve towards the
    // lower/left neighbour so a symmetric step yields a 1-px line.
    std::vector<std::uint8_t> candidate(n, 0);
    for (std::size_t y = 1; y + 1 < h; ++y) {
        for (std::size_t x = 1; x + 1 < w; ++x) {
            const std::size_t i = y * w + x;
            if (!eligible[i] || !(mag[i] > 0.0)) continue;
            // Direction quantised to 0, 45, 90 or 135 degrees (mod 180).
            constexpr double kTan22 = 0.41421356237309503;  // tan(22.5 deg)
            constexpr double kTan67 = 2.4142135623730949;   // tan(67.5 deg)
            const double ax = gy[i] < 0.0 ? -gx[i] : gx[i];
            const double ay = std::abs(gy[i]);
            const auto sw = static_cast<std::ptrdiff_t>(w);
            std::ptrdiff_t step;
            if (ax > 0.0) step = ay < kTan22 * ax ? 1 : (ay < kTan67 * ax ? sw + 1 : sw);
            else if (ax < 0.0) step = ay <= -kTan22 * ax ? 1 : (ay <= -kTan67 * ax ? sw - 1 : sw);
            else step = ay > 0.0 ? sw : 1;
            const std::size_t prev = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i) - step);
            const std::size_t next = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i) + step);
            if (!has_grad[prev] || !has_grad[next]) continue;
            if (mag[i] > mag[prev] && mag[i] >= mag[next] && mag[i] >= low) candidate[i] = 1;
        }
    }

    PixelMask out(w, h);
    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < n; ++i) {
        if (candidate[i] && mag[i] >= high && !out.bits[i]) {
            out.bits[i] = 1;
            stack.push_back(i);
        }
    }
    while (!stack.empty()) {
        const std::size_t i = stack.back();
        stack.pop_back();
        const std::size_t x = i % w, y = i / w;
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                if (dx == 0 && dy == 0) continue;
                const std::size_t j = (y + dy) * w + (x + dx);  // candidates are never on the border
                if (candidate[j] && !out.bits[j]) {
                    out.bits[j] = 1;
                    stack.push_back(j);
                }
            }
        }
    }
    return EdgeMask(std::move(out), source);
}

namespace detail {

// 1D lower envelope of parabolas over squared distances. Entries of f that
// are infinite contribute no parabola.
inline void edt_1d(const double* f, std::size_t n, std::size_t stride, double* out, std::vector<std::size_t>& v,
                   std::vector<double>& z) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    v.resize(n);
    z.resize(n + 1);
    std::ptrdiff_t k = -1;
    for (std::size_t q = 0; q < n; ++q) {
        const double fq = f[q * stride];
        if (fq == inf) continue;
        const double dq = static_cast<double>(q);
        double s = -inf;
        while (k >= 0) {
            const double dv = static_cast<double>(v[k]);
            s = ((fq + dq * dq) - (f[v[k] * stride] + dv * dv)) / (2.0 * dq - 2.0 * dv);
            if (s <= z[k]) --k;
            else break;
        }
        ++k;
        v[k] = q;
        z[k] = k == 0 ? -inf : s;
        z[k + 1] = inf;
    }
    if (k < 0) {
        for (std::size_t q = 0; q < n; ++q) out[q * stride] = inf;
        return;
    }
    std::ptrdiff_t j = 0;
    for (std::size_t q = 0; q < n; ++q) {
        const double dq = static_cast<double>(q);
        while (z[j + 1] < dq) ++j;
        const double d = dq - static_cast<double>(v[j]);
        out[q * stride] = d * d + f[v[j] * stride];
    }
}

}  // namespace detail

/// Exact Euclidean distance transform: distance from each pixel to the
/// nearest seed. Without seeds every distance is +inf.
inline DistanceField edt(const PixelMask& seed) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    const std::size_t w = seed.width, h = seed.height;
    DistanceField out{w, h, std::vector<double>(w * h, inf)};
    if (seed.count() == 0) return out;

    std::vector<double> f(w * h), g(w * h);
    for (std::size_t i = 0; i < w * h; ++i) f[i] = seed.bits[i] ? 0.0 : inf;
    std::vector<std::size_t> v;
    std::vector<double> z;
    for (std::size_t x = 0; x < w; ++x) detail::edt_1d(f.data() + x, h, w, g.data() + x, v, z);
    for (std::size_t y = 0; y < h; ++y) detail::edt_1d(g.data() + y * w, w, 1, out.dist.data() + y * w, v, z);
    for (auto& d : out.dist) d = std::sqrt(d);
    return out;
}

inline DistanceField edt(const EdgeMask& seed) { return edt(seed.edges); }

struct EdgeAccuracyCompletion {
    double edge_acc = 0.0;                ///< pixels, in [0, theta]
    std::optional<double> edge_comp;      ///< missing when GT has no edges
};

/// IBims-1 style truncated mean distances. Accuracy averages, over predicted
/// edges, the distance to the nearest GT edge; completion the reverse. Each
/// distance is truncated at theta before averaging.
inline EdgeAccuracyCompletion edge_accuracy_completion(const EdgeMask& pred_edges, const EdgeMask& gt_edges,
                                                       double theta) {
    if (pred_edges.width() != gt_edges.width() || pred_edges.height() != gt_edges.height())
        throw Error(ErrorCode::InvalidRaster, "edges", "edge mask shapes differ");

    auto truncated_mean = [theta](const PixelMask& from, const DistanceField& to) -> std::optional<double> {
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < from.bits.size(); ++i) {
            if (!from.bits[i]) continue;
            sum += std::min(to.dist[i], theta);
            ++n;
        }
        if (n == 0) return std::nullopt;
        return std::min(sum / static_cast<double>(n), theta);
    };

    EdgeAccuracyCompletion out;
    out.edge_acc = truncated_mean(pred_edges.edges, edt(gt_edges)).value_or(theta);
    out.edge_comp = truncated_mean(gt_edges.edges, edt(pred_edges));
    return out;
}

}  // namespace mdec
