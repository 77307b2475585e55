#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>

#include "mdec/align.hpp"
#include "mdec/core.hpp"

namespace mdec {

struct ImageMetrics {
    double mae = 0.0;
    double rmse = 0.0;
    double absrel = 0.0;
    std::array<double, 3> delta{};  ///< thresholds base^1, base^2, base^3
    std::size_t pixel_count = 0;
};

/// Pixel-wise comparison over aligned.valid & gt.valid. The delta accuracies
/// use a strict "<" against base^n; AbsRel normalises by the GT depth.
inline ImageMetrics image_metrics(const DepthRaster& pred, const DepthRaster& gt, const EvalConfig& cfg) {
    if (!pred.same_shape(gt)) throw Error(ErrorCode::InvalidRaster, "shape", "prediction and GT shapes differ");
    const std::array<double, 3> thresholds{cfg.delta_base, cfg.delta_base * cfg.delta_base,
                                           cfg.delta_base * cfg.delta_base * cfg.delta_base};
    double abs_sum = 0.0, sq_sum = 0.0, rel_sum = 0.0;
    std::array<std::size_t, 3> hits{};
    std::size_t n = 0;
    const auto pv = pred.values();
    const auto gv = gt.values();
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!pred.valid()[i] || !gt.valid()[i]) continue;
        const double e = pv[i] - gv[i];
        const double ae = std::abs(e);
        abs_sum += ae;
        sq_sum += e * e;
        rel_sum += ae / gv[i];
        const double ratio = std::max(pv[i] / gv[i], gv[i] / pv[i]);
        for (std::size_t k = 0; k < 3; ++k) hits[k] += ratio < thresholds[k];
        ++n;
    }
    if (n == 0) throw Error(ErrorCode::EmptyMask, "image_metrics", "no jointly valid pixels");

    ImageMetrics m;
    const double dn = static_cast<double>(n);
    m.mae = abs_sum / dn;
    // sqrt(mean e^2) can land one ulp under mean|e| when all |e| are equal.
    m.rmse = std::max(std::sqrt(sq_sum / dn), m.mae);
    m.absrel = rel_sum / dn;
    for (std::size_t k = 0; k < 3; ++k) m.delta[k] = static_cast<double>(hits[k]) / dn;
    m.pixel_count = n;
    return m;
}

inline ImageMetrics image_metrics(const AlignedDepth& aligned, const DepthRaster& gt, const EvalConfig& cfg) {
    return image_metrics(aligned.depth, gt, cfg);
}

}  // namespace mdec
