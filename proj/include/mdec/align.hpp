#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "mdec/core.hpp"

namespace mdec {

struct AlignedDepth {
    DepthRaster depth;  ///< meters; valid pixels lie in [depth_min, depth_max]
    AffineAlignment alignment;
    std::size_t clamped_count = 0;
};

/// Bilinear resampling with half-pixel centers. An output pixel is valid iff
/// every source pixel carrying non-zero weight is valid.
inline DepthRaster resize_bilinear(const DepthRaster& src, std::size_t target_w, std::size_t target_h) {
    if (target_w < 1 || target_h < 1) throw Error(ErrorCode::InvalidRaster, "target", "target size must be >= 1");
    if (target_w == src.width() && target_h == src.height()) return src;

    struct Tap {
        std::size_t i0, i1;
        double w1;  // weight of i1; i0 gets 1 - w1
    };
    auto taps = [](std::size_t n_src, std::size_t n_dst) {
        std::vector<Tap> out(n_dst);
        const double ratio = static_cast<double>(n_src) / static_cast<double>(n_dst);
        const double hi = static_cast<double>(n_src - 1);
        for (std::size_t x = 0; x < n_dst; ++x) {
            double u = std::clamp((static_cast<double>(x) + 0.5) * ratio - 0.5, 0.0, hi);
            auto i0 = static_cast<std::size_t>(std::floor(u));
            std::size_t i1 = std::min(i0 + 1, n_src - 1);
            out[x] = {i0, i1, u - static_cast<double>(i0)};
        }
        return out;
    };
    const auto tx = taps(src.width(), target_w);
    const auto ty = taps(src.height(), target_h);

    std::vector<double> values(target_w * target_h);
    std::vector<std::uint8_t> valid(target_w * target_h, 0);
    const auto sv = src.values();
    const auto sm = src.valid();
    const std::size_t sw = src.width();
    for (std::size_t y = 0; y < target_h; ++y) {
        const Tap& a = ty[y];
        for (std::size_t x = 0; x < target_w; ++x) {
            const Tap& b = tx[x];
            const std::size_t idx[4] = {a.i0 * sw + b.i0, a.i0 * sw + b.i1, a.i1 * sw + b.i0, a.i1 * sw + b.i1};
            const double wts[4] = {(1.0 - a.w1) * (1.0 - b.w1), (1.0 - a.w1) * b.w1, a.w1 * (1.0 - b.w1),
                                   a.w1 * b.w1};
            double acc = 0.0;
            bool ok = true;
            for (int k = 0; k < 4; ++k) {
                if (wts[k] <= 0.0) continue;
                if (!sm[idx[k]]) {
                    ok = false;
                    break;
                }
                acc += wts[k] * sv[idx[k]];
            }
            values[y * target_w + x] = acc;
            valid[y * target_w + x] = ok ? 1 : 0;
        }
    }
    return DepthRaster(target_w, target_h, std::move(values), std::move(valid));
}

/// Disparity is inverted (non-positive disparity becomes invalid); every other
/// kind passes through and the alignment absorbs its scale and shift.
inline DepthRaster to_depth_space(const DepthRaster& pred, PredictionKind kind) {
    if (kind != PredictionKind::Disparity) {
        if (pred.valid_count() == 0) throw Error(ErrorCode::AllInvalid, "prediction", "no valid pixels");
        return pred;
    }
    std::vector<double> values(pred.size());
    std::vector<std::uint8_t> valid(pred.size(), 0);
    std::size_t survivors = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double p = pred.values()[i];
        if (pred.valid()[i] && p > 0.0) {
            double d = 1.0 / p;
            if (std::isfinite(d)) {
                values[i] = d;
                valid[i] = 1;
                ++survivors;
            }
        }
    }
    if (survivors == 0) throw Error(ErrorCode::AllInvalid, "prediction", "no pixel survives disparity inversion");
    return DepthRaster(pred.width(), pred.height(), std::move(values), std::move(valid));
}

namespace detail {

inline PixelMask fit_mask(const DepthRaster& pred, const DepthRaster& gt, const PixelMask* extra) {
    PixelMask m = joint_valid(pred, gt);
    if (extra) {
        if (extra->width != m.width || extra->height != m.height)
            throw Error(ErrorCode::InvalidRaster, "mask", "mask shape differs from rasters");
        for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = m.bits[i] && extra->bits[i];
    }
    return m;
}

struct LseFit {
    double scale, shift;
    bool degenerate;
};

// Mean-centred closed form of the 2x2 normal equations.
inline LseFit lse_fit(std::span<const double> p, std::span<const double> d, const std::vector<std::size_t>& idx) {
    const double n = static_cast<double>(idx.size());
    double mp = 0.0, md = 0.0, mpp = 0.0;
    for (auto i : idx) {
        mp += p[i];
        md += d[i];
        mpp += p[i] * p[i];
    }
    mp /= n;
    md /= n;
    mpp /= n;
    double var = 0.0, cov = 0.0;
    for (auto i : idx) {
        const double dp = p[i] - mp;
        var += dp * dp;
        cov += dp * (d[i] - md);
    }
    var /= n;
    cov /= n;
    if (!(var > 1e-12 * mpp)) return {1.0, md - mp, true};
    const double s = cov / var;
    return {s, md - s * mp, false};
}

}  // namespace detail

/// Least-squares (scale, shift) over pred.valid & gt.valid (& `mask`).
/// With `robust_refit`, residuals beyond 3 standard deviations are dropped
/// and the fit is repeated once.
inline AffineAlignment solve_lse_affine(const DepthRaster& pred, const DepthRaster& gt,
                                        const PixelMask* mask = nullptr, bool robust_refit = false) {
    PixelMask m = detail::fit_mask(pred, gt, mask);
    std::vector<std::size_t> idx;
    idx.reserve(m.bits.size());
    for (std::size_t i = 0; i < m.bits.size(); ++i)
        if (m.bits[i]) idx.push_back(i);
    if (idx.size() < 2) throw Error(ErrorCode::TooFewPixels, "lse", "need at least 2 jointly valid pixels");

    const auto p = pred.values();
    const auto d = gt.values();
    auto fit = detail::lse_fit(p, d, idx);
    AffineAlignment a{fit.scale, fit.shift, AlignmentMethod::LseAffine, fit.degenerate, false};

    if (robust_refit) {
        double ss = 0.0;
        for (auto i : idx) {
            const double r = fit.scale * p[i] + fit.shift - d[i];
            ss += r * r;
        }
        const double sigma = std::sqrt(ss / static_cast<double>(idx.size()));
        std::vector<std::size_t> kept;
        kept.reserve(idx.size());
        for (auto i : idx)
            if (std::abs(fit.scale * p[i] + fit.shift - d[i]) <= 3.0 * sigma) kept.push_back(i);
        if (kept.size() >= 2 && kept.size() < idx.size()) {
            fit = detail::lse_fit(p, d, kept);
            a = {fit.scale, fit.shift, AlignmentMethod::LseAffine, fit.degenerate, true};
        }
    }
    return a;
}

namespace detail {

// Even-count medians average the two middle order statistics.
inline double median_of(std::vector<double> v) {
    const std::size_t n = v.size();
    auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(v.begin(), mid, v.end());
    double hi = *mid;
    if (n % 2 == 1) return hi;
    double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

}  // namespace detail

/// Legacy alignment: scale = median(gt) / median(pred), shift = 0.
inline AffineAlignment median_scale(const DepthRaster& pred, const DepthRaster& gt, const PixelMask* mask = nullptr) {
    PixelMask m = detail::fit_mask(pred, gt, mask);
    std::vector<double> pv, dv;
    for (std::size_t i = 0; i < m.bits.size(); ++i) {
        if (!m.bits[i]) continue;
        if (!(pred.values()[i] > 0.0))
            throw Error(ErrorCode::NonPositivePrediction, "median", "median scaling needs positive predictions");
        pv.push_back(pred.values()[i]);
        dv.push_back(gt.values()[i]);
    }
    if (pv.empty()) throw Error(ErrorCode::TooFewPixels, "median", "no jointly valid pixels");
    const double s = detail::median_of(std::move(dv)) / detail::median_of(std::move(pv));
    return {s, 0.0, AlignmentMethod::MedianScale, false, false};
}

/// depth = scale * pred + shift, clamped into [depth_min, depth_max].
/// Validity is unchanged; pixels pushed onto a bound are counted.
inline AlignedDepth apply_alignment(const DepthRaster& pred, const AffineAlignment& alignment, const EvalConfig& cfg) {
    if (!alignment.finite()) throw Error(ErrorCode::InvalidTransform, "alignment", "scale/shift must be finite");
    std::vector<double> values(pred.size());
    std::vector<std::uint8_t> valid(pred.valid().begin(), pred.valid().end());
    std::size_t clamped = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!valid[i]) continue;
        double v = alignment.scale * pred.values()[i] + alignment.shift;
        if (v < cfg.depth_min) {
            v = cfg.depth_min;
            ++clamped;
        } else if (v > cfg.depth_max) {
            v = cfg.depth_max;
            ++clamped;
        } else if (!std::isfinite(v)) {
            v = cfg.depth_max;
            ++clamped;
        }
        values[i] = v;
    }
    return {DepthRaster(pred.width(), pred.height(), std::move(values), std::move(valid)), alignment, clamped};
}

}  // namespace mdec
