#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "mdec/align.hpp"
#include "mdec/core.hpp"

namespace mdec {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;
    friend bool operator==(const Vec3&, const Vec3&) = default;
};

/// Camera-frame points: x right, y down, z forward (meters).
struct PointCloud {
    std::vector<Vec3> points;
    std::vector<std::array<std::uint32_t, 2>> source_pixel;

    std::size_t size() const noexcept { return points.size(); }
    bool empty() const noexcept { return points.empty(); }
};

struct CloudMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f_score = 0.0;
    friend bool operator==(const CloudMetrics&, const CloudMetrics&) = default;
};

inline CloudMetrics make_cloud_metrics(double precision, double recall) {
    CloudMetrics m{precision, recall, 0.0};
    if (precision + recall > 0.0) m.f_score = 2.0 * precision * recall / (precision + recall);
    return m;
}

inline double squared_distance(const Vec3& a, const Vec3& b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    const double dz = a.z - b.z;
    return dx * dx + dy * dy + dz * dz;
}

/// Lifts every valid (and, if given, restricted) pixel through the pinhole
/// model with pixel centres at (x + 0.5, y + 0.5).
inline PointCloud backproject(const DepthRaster& depth, const CameraIntrinsics& K, const PixelMask* restrict = nullptr) {
    if (restrict && (restrict->width != depth.width() || restrict->height != depth.height()))
        throw Error(ErrorCode::InvalidRaster, "restrict", "mask shape differs from raster");
    PointCloud cloud;
    cloud.points.reserve(depth.valid_count());
    cloud.source_pixel.reserve(depth.valid_count());
    const double inv_fx = 1.0 / K.fx;
    const double inv_fy = 1.0 / K.fy;
    for (std::size_t y = 0; y < depth.height(); ++y) {
        const double ry = (static_cast<double>(y) + 0.5 - K.cy) * inv_fy;
        for (std::size_t x = 0; x < depth.width(); ++x) {
            const std::size_t i = y * depth.width() + x;
            if (!depth.valid()[i] || (restrict && !restrict->bits[i])) continue;
            const double z = depth.values()[i];
            const double rx = (static_cast<double>(x) + 0.5 - K.cx) * inv_fx;
            cloud.points.push_back({rx * z, ry * z, z});
            cloud.source_pixel.push_back({static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y)});
        }
    }
    return cloud;
}

/// Uniform grid over a point set answering "is any point within tau of q?".
/// The cell edge is at least tau, so the 27-cell neighbourhood of q's cell
/// covers the closed tau-ball; the final decision is the exact squared
/// distance test. Cells live in a dense array over the occupied bounding box
/// when that is small enough, otherwise in a hash map.
class RadiusGrid {
public:
    static constexpr std::uint32_t kNoHint = ~std::uint32_t{0};

    RadiusGrid(const std::vector<Vec3>& points, double tau) : tau2_(tau * tau) {
        double extent = 0.0;
        for (const auto& p : points)
            extent = std::max({extent, std::abs(p.x), std::abs(p.y), std::abs(p.z)});
        // Headroom keeps rounding in the cell coordinate from splitting a
        // tau-pair across non-adjacent cells; the extent term keeps cell
        // coordinates inside the 21-bit packing range.
        cell_ = std::max(tau * (1.0 + 1e-9), extent / double(kHalfRange - 2));
        inv_cell_ = 1.0 / cell_;
        if (points.empty()) return;

        std::vector<Cell> cells(points.size());
        lo_ = hi_ = cell_of(points[0]);
        for (std::size_t i = 0; i < points.size(); ++i) {
            cells[i] = cell_of(points[i]);
            for (int a = 0; a < 3; ++a) {
                lo_[a] = std::min(lo_[a], cells[i][a]);
                hi_[a] = std::max(hi_[a], cells[i][a]);
            }
        }
        for (int a = 0; a < 3; ++a) dims_[a] = hi_[a] - lo_[a] + 1;
        const double volume = double(dims_[0]) * double(dims_[1]) * double(dims_[2]);
        sorted_.resize(points.size());

        if (volume <= std::max(16.0 * double(points.size()), 4096.0)) {
            dense_ = true;
            // Counting sort: inclusive prefix sums give cell ends, and a
            // reverse scatter turns them into stable cell starts.
            offsets_.assign(static_cast<std::size_t>(volume) + 1, 0);
            std::vector<std::uint32_t> slot(points.size());
            for (std::size_t i = 0; i < points.size(); ++i) {
                slot[i] = static_cast<std::uint32_t>(dense_index(cells[i]));
                ++offsets_[slot[i]];
            }
            for (std::size_t c = 1; c + 1 < offsets_.size(); ++c) offsets_[c] += offsets_[c - 1];
            offsets_.back() = static_cast<std::uint32_t>(points.size());
            for (std::size_t i = points.size(); i-- > 0;) sorted_[--offsets_[slot[i]]] = points[i];
            return;
        }

        std::vector<std::pair<std::uint64_t, std::uint32_t>> keyed(points.size());
        for (std::size_t i = 0; i < points.size(); ++i)
            keyed[i] = {key_of(cells[i]), static_cast<std::uint32_t>(i)};
        std::sort(keyed.begin(), keyed.end());
        cells_.reserve(points.size() / 8 + 16);
        for (std::size_t i = 0; i < keyed.size();) {
            std::size_t j = i;
            while (j < keyed.size() && keyed[j].first == keyed[i].first) {
                sorted_[j] = points[keyed[j].second];
                ++j;
            }
            cells_.emplace(keyed[i].first, Range{static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)});
            i = j;
        }
    }

    bool any_within(const Vec3& q) const {
        std::uint32_t hint = kNoHint;
        return any_within(q, hint);
    }

    /// As above; `hint` holds the index of the last point found within tau
    /// and is tried first, which pays off for queries in scan order.
    bool any_within(const Vec3& q, std::uint32_t& hint) const {
        if (sorted_.empty()) return false;
        if (hint != kNoHint && squared_distance(q, sorted_[hint]) <= tau2_) return true;
        const Cell c = cell_of(q);
        if (scan(c, q, hint)) return true;
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0 && dz == 0) continue;
                    if (scan({c[0] + dx, c[1] + dy, c[2] + dz}, q, hint)) return true;
                }
        return false;
    }

private:
    static constexpr std::int64_t kHalfRange = std::int64_t{1} << 20;

    using Cell = std::array<std::int64_t, 3>;

    struct Range {
        std::uint32_t begin, end;
    };

    Cell cell_of(const Vec3& p) const {
        return {static_cast<std::int64_t>(std::floor(p.x * inv_cell_)),
                static_cast<std::int64_t>(std::floor(p.y * inv_cell_)),
                static_cast<std::int64_t>(std::floor(p.z * inv_cell_))};
    }

    static std::uint64_t key_of(const Cell& c) {
        auto pack = [](std::int64_t v) { return static_cast<std::uint64_t>(v + kHalfRange) & 0x1fffffu; };
        return (pack(c[0]) << 42) | (pack(c[1]) << 21) | pack(c[2]);
    }

    std::size_t dense_index(const Cell& c) const {
        return static_cast<std::size_t>(((c[2] - lo_[2]) * dims_[1] + (c[1] - lo_[1])) * dims_[0] + (c[0] - lo_[0]));
    }

    Range range_of(const Cell& c) const {
        if (dense_) {
            for (int a = 0; a < 3; ++a)
                if (c[a] < lo_[a] || c[a] > hi_[a]) return {0, 0};
            const std::size_t i = dense_index(c);
            return {offsets_[i], offsets_[i + 1]};
        }
        auto it = cells_.find(key_of(c));
        return it == cells_.end() ? Range{0, 0} : it->second;
    }

    bool scan(const Cell& c, const Vec3& q, std::uint32_t& hint) const {
        const Range r = range_of(c);
        for (std::uint32_t i = r.begin; i < r.end; ++i)
            if (squared_distance(q, sorted_[i]) <= tau2_) {
                hint = i;
                return true;
            }
        return false;
    }

    double tau2_;
    double cell_ = 1.0;
    double inv_cell_ = 1.0;
    std::vector<Vec3> sorted_;
    bool dense_ = false;
    Cell lo_{}, hi_{}, dims_{};
    std::vector<std::uint32_t> offsets_;
    std::unordered_map<std::uint64_t, Range> cells_;
};
namespace detail {

inline bool pixel_before(const std::array<std::uint32_t, 2>& a, const std::array<std::uint32_t, 2>& b) {
    return a[1] != b[1] ? a[1] < b[1] : a[0] < b[0];
}

// Clouds lifted from rasters carry row-major source pixels; the points of the
// other cloud at the same pixel and its row neighbours are tried before the
// grid search.
inline double fraction_within(const PointCloud& queries, const PointCloud& indexed, const RadiusGrid& index,
                              double tau) {
    if (queries.empty()) return 0.0;
    const double tau2 = tau * tau;
    const bool paired = queries.source_pixel.size() == queries.size() && indexed.source_pixel.size() == indexed.size();
    std::size_t hits = 0, j = 0;
    std::uint32_t hint = RadiusGrid::kNoHint;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const Vec3& q = queries.points[i];
        if (paired) {
            const auto& px = queries.source_pixel[i];
            while (j < indexed.size() && pixel_before(indexed.source_pixel[j], px)) ++j;
            const std::size_t lo = j > 0 ? j - 1 : 0, hi = std::min(j + 2, indexed.size());
            bool hit = false;
            for (std::size_t k = lo; k < hi && !hit; ++k) hit = squared_distance(q, indexed.points[k]) <= tau2;
            if (hit) {
                ++hits;
                continue;
            }
        }
        hits += index.any_within(q, hint);
    }
    return static_cast<double>(hits) / static_cast<double>(queries.size());
}

}  // namespace detail

/// Reconstruction F-Score with the closed-ball (<= tau) distance decision.
/// Empty prediction gives precision 0; empty GT gives recall 0.
inline CloudMetrics fscore(const PointCloud& pred, const PointCloud& gt, double tau) {
    if (!(tau > 0.0)) throw Error(ErrorCode::InvalidConfig, "fscore_tau", "must be > 0");
    double precision = 0.0, recall = 0.0;
    if (!pred.empty() && !gt.empty()) {
        precision = detail::fraction_within(pred, gt, RadiusGrid(gt.points, tau), tau);
        recall = detail::fraction_within(gt, pred, RadiusGrid(pred.points, tau), tau);
    }
    return make_cloud_metrics(precision, recall);
}

/// F-Score with both clouds locked to the GT depth-boundary pixels.
/// Returns nullopt when there are no boundary pixels to evaluate.
inline std::optional<CloudMetrics> f_edges(const DepthRaster& aligned, const DepthRaster& gt, const PixelMask& gt_edges,
                                           const CameraIntrinsics& K, double tau) {
    if (gt_edges.count() == 0) return std::nullopt;
    return fscore(backproject(aligned, K, &gt_edges), backproject(gt, K, &gt_edges), tau);
}

inline std::optional<CloudMetrics> f_edges(const AlignedDepth& aligned, const DepthRaster& gt, const PixelMask& gt_edges,
                                           const CameraIntrinsics& K, double tau) {
    return f_edges(aligned.depth, gt, gt_edges, K, tau);
}

}  // namespace mdec
