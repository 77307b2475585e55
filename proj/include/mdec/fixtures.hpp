#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mdec/core.hpp"
#include "mdec/ingest.hpp"
#include "mdec/metrics_3d.hpp"
#include "mdec/metrics_edge.hpp"

namespace mdec::fixtures {

/// mt19937_64 with explicit uniform/normal transforms, so a seed produces the
/// same stream on every standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::uint64_t next() { return engine_(); }

    double gaussian() {
        if (spare_) {
            double v = *spare_;
            spare_.reset();
            return v;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        return r * std::cos(a);
    }

private:
    std::mt19937_64 engine_;
    std::optional<double> spare_;
};

enum class SceneKind { StepPlanes, SlantedPlane, SphereOnPlane, IndoorBox };

inline const char* to_string(SceneKind k) {
    switch (k) {
        case SceneKind::StepPlanes: return "step_planes";
        case SceneKind::SlantedPlane: return "slanted_plane";
        case SceneKind::SphereOnPlane: return "sphere_on_plane";
        case SceneKind::IndoorBox: return "indoor_box";
    }
    return "step_planes";
}

inline std::optional<SceneKind> parse_scene_kind(std::string_view s) {
    if (s == "step_planes") return SceneKind::StepPlanes;
    if (s == "slanted_plane") return SceneKind::SlantedPlane;
    if (s == "sphere_on_plane") return SceneKind::SphereOnPlane;
    if (s == "indoor_box") return SceneKind::IndoorBox;
    return std::nullopt;
}

inline constexpr SceneKind kAllSceneKinds[] = {SceneKind::StepPlanes, SceneKind::SlantedPlane,
                                               SceneKind::SphereOnPlane, SceneKind::IndoorBox};

struct SceneSpec {
    SceneKind kind = SceneKind::StepPlanes;
    std::size_t width = 64;
    std::size_t height = 48;
    double depth_near = 2.0;
    double depth_far = 8.0;
    std::uint64_t seed = 0;
};

struct Scene {
    DepthRaster gt;
    CameraIntrinsics K;
    EdgeMask analytic_edges;
};

namespace detail {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Depth of the first hit along the pixel ray (u, v, 1) for each primitive of
// a scene, with a primitive id so discontinuities are known exactly.
struct Hit {
    double z = kInf;
    int surface = -1;
};

struct Renderer {
    SceneSpec spec;
    double sphere_cx = 0, sphere_cy = 0, sphere_cz = 0, sphere_r = 0;
    double box_w = 0, box_h = 0;
    double panel_z = 0, panel_x0 = 0, panel_x1 = 0, panel_y0 = 0, panel_y1 = 0;

    explicit Renderer(const SceneSpec& s, double u_max, double v_max) : spec(s) {
        Rng rng(s.seed ^ 0x9e3779b97f4a7c15ull);
        const double mid = 0.5 * (s.depth_near + s.depth_far);
        sphere_cz = mid;
        sphere_r = std::min(0.25 * mid * std::min(u_max, v_max), 0.9 * (s.depth_far - mid));
        const double room_u = std::max(0.0, u_max * mid - sphere_r) * 0.5;
        const double room_v = std::max(0.0, v_max * mid - sphere_r) * 0.5;
        sphere_cx = rng.uniform(-room_u, room_u);
        sphere_cy = rng.uniform(-room_v, room_v);

        box_w = s.depth_near * u_max;
        box_h = s.depth_near * v_max;
        panel_z = mid;
        const double pw = rng.uniform(0.2, 0.4) * u_max * mid;
        const double ph = rng.uniform(0.2, 0.4) * v_max * mid;
        const double px = rng.uniform(-0.4, 0.4) * u_max * mid;
        const double py = rng.uniform(-0.4, 0.4) * v_max * mid;
        panel_x0 = px - pw;
        panel_x1 = px + pw;
        panel_y0 = py - ph;
        panel_y1 = py + ph;
    }

    double sphere_z(double u, double v) const {
        // |t * (u, v, 1) - c|^2 = r^2, nearest positive t; z = t.
        const double a = u * u + v * v + 1.0;
        const double b = -2.0 * (u * sphere_cx + v * sphere_cy + sphere_cz);
        const double c = sphere_cx * sphere_cx + sphere_cy * sphere_cy + sphere_cz * sphere_cz - sphere_r * sphere_r;
        const double disc = b * b - 4.0 * a * c;
        if (disc < 0.0) return kInf;
        const double t = (-b - std::sqrt(disc)) / (2.0 * a);
        return t > 0.0 ? t : kInf;
    }

    Hit hit(double u, double v, std::size_t px, std::size_t width) const {
        switch (spec.kind) {
            case SceneKind::StepPlanes:
                return px < width / 2 ? Hit{spec.depth_near, 0} : Hit{spec.depth_far, 1};
            case SceneKind::SlantedPlane: {
                // Plane whose inverse depth is linear in u: near at the left
                // image edge, far at the right.
                const double u0 = -0.5 * static_cast<double>(width) / (0.8 * static_cast<double>(width));
                const double t = (u - u0) / (-2.0 * u0);
                const double inv = (1.0 - t) / spec.depth_near + t / spec.depth_far;
                return {1.0 / inv, 0};
            }
            case SceneKind::SphereOnPlane: {
                const double zs = sphere_z(u, v);
                if (zs < spec.depth_far) return {zs, 1};
                return {spec.depth_far, 0};
            }
            case SceneKind::IndoorBox: {
                Hit best{spec.depth_far, 0};
                auto consider = [&](double z, int id) {
                    if (z > 0.0 && z < best.z) best = {z, id};
                };
                if (u > 0.0) consider(box_w / u, 1);
                if (u < 0.0) consider(-box_w / u, 2);
                if (v > 0.0) consider(box_h / v, 3);
                if (v < 0.0) consider(-box_h / v, 4);
                const double xp = u * panel_z, yp = v * panel_z;
                if (xp >= panel_x0 && xp <= panel_x1 && yp >= panel_y0 && yp <= panel_y1) consider(panel_z, 5);
                return best;
            }
        }
        return {};
    }
};

}  // namespace detail

/// Renders analytic depth with fx = fy = 0.8 * width, (cx, cy) at the image
/// centre. Analytic edges are pixels whose 4-neighbourhood crosses onto a
/// different surface with a depth jump of at least twice the local variation
/// along the pixel's own surface.
inline Scene gen_scene(const SceneSpec& spec) {
    if (spec.width < 1 || spec.height < 1) throw Error(ErrorCode::InvalidRaster, "scene", "empty scene size");
    if (!(spec.depth_near > 0.0 && spec.depth_near < spec.depth_far))
        throw Error(ErrorCode::InvalidConfig, "depth_near", "need 0 < depth_near < depth_far");

    const std::size_t w = spec.width, h = spec.height;
    CameraIntrinsics K{0.8 * static_cast<double>(w), 0.8 * static_cast<double>(w), 0.5 * static_cast<double>(w),
                       0.5 * static_cast<double>(h)};
    const double u_max = 0.5 * static_cast<double>(w) / K.fx;
    const double v_max = 0.5 * static_cast<double>(h) / K.fy;
    detail::Renderer r(spec, u_max, v_max);

    std::vector<double> z(w * h);
    std::vector<int> surface(w * h);
    for (std::size_t y = 0; y < h; ++y) {
        const double v = (static_cast<double>(y) + 0.5 - K.cy) / K.fy;
        for (std::size_t x = 0; x < w; ++x) {
            const double u = (static_cast<double>(x) + 0.5 - K.cx) / K.fx;
            auto hit = r.hit(u, v, x, w);
            z[y * w + x] = hit.z;
            surface[y * w + x] = hit.surface;
        }
    }

    EdgeMask edges(w, h, EdgeSource::GroundTruth);
    const std::ptrdiff_t dxs[4] = {1, -1, 0, 0};
    const std::ptrdiff_t dys[4] = {0, 0, 1, -1};
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t i = y * w + x;
            double smooth = 0.0, jump = 0.0;
            for (int k = 0; k < 4; ++k) {
                const auto nx = static_cast<std::ptrdiff_t>(x) + dxs[k];
                const auto ny = static_cast<std::ptrdiff_t>(y) + dys[k];
                if (nx < 0 || ny < 0 || nx >= static_cast<std::ptrdiff_t>(w) || ny >= static_cast<std::ptrdiff_t>(h))
                    continue;
                const std::size_t j = static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx);
                const double diff = std::abs(z[j] - z[i]);
                if (surface[j] == surface[i]) smooth = std::max(smooth, diff);
                else jump = std::max(jump, diff);
            }
            if (jump > 0.0 && jump >= 2.0 * smooth) edges.edges.bits[i] = 1;
        }
    }
    return {DepthRaster::from_values(w, h, std::move(z)), K, std::move(edges)};
}

/// Synthesises a submission of the given kind from GT:
/// Metric gt + n, AffineInvariant s*gt + t + n, ScaleInvariant s*gt + n,
/// Disparity 1/(s*gt + t) + n, with n ~ N(0, noise_sigma^2) seeded.
inline DepthRaster synth_prediction(const DepthRaster& gt, PredictionKind kind, double s, double t,
                                    double noise_sigma, std::uint64_t seed) {
    if (!std::isfinite(s) || !std::isfinite(t) || !(noise_sigma >= 0.0))
        throw Error(ErrorCode::InvalidTransform, "synth", "scale/shift must be finite, noise >= 0");
    Rng rng(seed);
    std::vector<double> values(gt.size());
    std::vector<std::uint8_t> valid(gt.valid().begin(), gt.valid().end());
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const double noise = noise_sigma > 0.0 ? noise_sigma * rng.gaussian() : 0.0;
        if (!valid[i]) continue;
        const double d = gt.values()[i];
        double p = 0.0;
        switch (kind) {
            case PredictionKind::Metric: p = d; break;
            case PredictionKind::AffineInvariant: p = s * d + t; break;
            case PredictionKind::ScaleInvariant: p = s * d; break;
            case PredictionKind::Disparity: {
                const double denom = s * d + t;
                if (!(denom > 0.0))
                    throw Error(ErrorCode::InvalidTransform, "synth", "disparity needs s*d + t > 0 at every valid pixel");
                p = 1.0 / denom;
                break;
            }
        }
        values[i] = p + noise;
    }
    return DepthRaster(gt.width(), gt.height(), std::move(values), std::move(valid));
}

/// All-pairs F-Score, the definitional reference for `fscore`.
inline CloudMetrics oracle_nn(const PointCloud& pred, const PointCloud& gt, double tau) {
    const double tau2 = tau * tau;
    auto covered = [tau2](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
        if (from.empty()) return 0.0;
        std::size_t hits = 0;
        for (const auto& a : from) {
            for (const auto& b : to) {
                const double dx = a.x - b.x;
                const double dy = a.y - b.y;
                const double dz = a.z - b.z;
                if (dx * dx + dy * dy + dz * dz <= tau2) {
                    ++hits;
                    break;
                }
            }
        }
        return static_cast<double>(hits) / static_cast<double>(from.size());
    };
    return make_cloud_metrics(covered(pred.points, gt.points), covered(gt.points, pred.points));
}

/// Brute-force nearest-seed scan, the definitional reference for `edt`.
inline DistanceField oracle_edt(const PixelMask& seed) {
    const std::size_t w = seed.width, h = seed.height;
    DistanceField out{w, h, std::vector<double>(w * h, std::numeric_limits<double>::infinity())};
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t sy = 0; sy < h; ++sy)
                for (std::size_t sx = 0; sx < w; ++sx) {
                    if (!seed.at(sx, sy)) continue;
                    const double dx = static_cast<double>(x) - static_cast<double>(sx);
                    const double dy = static_cast<double>(y) - static_cast<double>(sy);
                    best = std::min(best, dx * dx + dy * dy);
                }
            out.dist[y * w + x] = std::sqrt(best);
        }
    return out;
}

inline DistanceField oracle_edt(const EdgeMask& seed) { return oracle_edt(seed.edges); }

// ---------------------------------------------------------------------------
// On-disk synthetic challenge
// ---------------------------------------------------------------------------

struct DatasetSpec {
    std::size_t frames = 8;
    std::size_t width = 128;
    std::size_t height = 96;
    std::uint64_t seed = 1;
    std::string team = "reference";
    PredictionKind kind = PredictionKind::AffineInvariant;
    double scale = 0.5;
    double shift = 0.25;
    double noise = 0.0;
    /// Write predictions at half resolution to exercise upsampling.
    bool half_resolution = false;
    std::optional<AlignmentMethod> alignment;
    /// Per-frame near depth is drawn from [near_min, near_max] and the far
    /// depth is near times a ratio drawn from [far_ratio_min, far_ratio_max].
    double near_min = 1.0;
    double near_max = 4.0;
    double far_ratio_min = 2.5;
    double far_ratio_max = 6.0;
};

inline DatasetSpec dataset_spec_from_json(const nlohmann::json& j) {
    DatasetSpec s;
    auto get = [&](const char* key, auto& out) {
        if (j.contains(key) && !j[key].is_null()) {
            try {
                out = j[key].get<std::decay_t<decltype(out)>>();
            } catch (const nlohmann::json::exception& e) {
                throw Error(ErrorCode::ParseError, key, e.what());
            }
        }
    };
    get("frames", s.frames);
    get("width", s.width);
    get("height", s.height);
    get("seed", s.seed);
    get("team", s.team);
    get("scale", s.scale);
    get("shift", s.shift);
    get("noise", s.noise);
    get("half_resolution", s.half_resolution);
    get("near_min", s.near_min);
    get("near_max", s.near_max);
    get("far_ratio_min", s.far_ratio_min);
    get("far_ratio_max", s.far_ratio_max);
    if (j.contains("prediction_kind")) {
        auto k = parse_prediction_kind(j["prediction_kind"].get<std::string>());
        if (!k) throw Error(ErrorCode::ParseError, "prediction_kind", "unknown kind");
        s.kind = *k;
    }
    if (j.contains("alignment")) {
        auto a = parse_alignment_method(j["alignment"].get<std::string>());
        if (!a) throw Error(ErrorCode::ParseError, "alignment", "unknown alignment");
        s.alignment = *a;
    }
    if (s.frames == 0 || s.width < 4 || s.height < 4)
        throw Error(ErrorCode::ParseError, "spec", "need frames >= 1 and width, height >= 4");
    if (!(s.near_min > 0 && s.near_min <= s.near_max && s.far_ratio_min > 1 && s.far_ratio_min <= s.far_ratio_max) ||
        s.near_max * s.far_ratio_max * kDefaultDepthDivisor > 65535.0)
        throw Error(ErrorCode::ParseError, "spec", "depth range must be positive, ordered and fit in PNG16");
    return s;
}

struct Dataset {
    Manifest manifest;
    std::vector<DepthRaster> gt;  ///< as stored on disk (PNG16-quantised)
    SubmissionMeta meta;
    std::map<std::string, DepthRaster> predictions;
};

inline constexpr const char* kCategories[] = {"urban", "natural", "indoor", "industrial"};

inline SceneKind scene_for_category(std::size_t category) {
    switch (category % 4) {
        case 0: return SceneKind::StepPlanes;
        case 1: return SceneKind::SphereOnPlane;
        case 2: return SceneKind::IndoorBox;
        default: return SceneKind::SlantedPlane;
    }
}

inline DepthRaster downsample_nearest(const DepthRaster& src, std::size_t w, std::size_t h) {
    std::vector<double> v(w * h);
    std::vector<std::uint8_t> ok(w * h);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t sx = std::min(src.width() - 1, x * src.width() / w);
            const std::size_t sy = std::min(src.height() - 1, y * src.height() / h);
            v[y * w + x] = src.at(sx, sy);
            ok[y * w + x] = src.is_valid(sx, sy);
        }
    return DepthRaster(w, h, std::move(v), std::move(ok));
}

/// Builds the synthetic challenge in memory. GT is quantised exactly as the
/// PNG16 round trip would, so the in-memory and on-disk datasets agree.
inline Dataset make_dataset(const DatasetSpec& spec) {
    Dataset ds;
    Rng rng(spec.seed);
    for (std::size_t f = 0; f < spec.frames; ++f) {
        const std::size_t cat = f % 4;
        SceneSpec scene{scene_for_category(cat), spec.width, spec.height, 0.0, 0.0, rng.next()};
        scene.depth_near = rng.uniform(spec.near_min, spec.near_max);
        scene.depth_far = scene.depth_near * rng.uniform(spec.far_ratio_min, spec.far_ratio_max);
        Scene s = gen_scene(scene);

        std::vector<double> q(s.gt.size());
        std::vector<std::uint8_t> ok(s.gt.size());
        for (std::size_t i = 0; i < q.size(); ++i) {
            const double stored = std::clamp(std::round(s.gt.values()[i] * kDefaultDepthDivisor), 0.0, 65535.0);
            q[i] = stored / kDefaultDepthDivisor;
            ok[i] = stored > 0.0;
        }
        DepthRaster gt(spec.width, spec.height, std::move(q), std::move(ok));

        char id[16];
        std::snprintf(id, sizeof id, "%04zu", f);
        FrameRecord rec;
        rec.frame_id = id;
        rec.category = kCategories[cat];
        rec.gt = std::string("gt/") + id + ".png";
        rec.intrinsics = s.K;
        rec.width = spec.width;
        rec.height = spec.height;
        ds.manifest.frames.push_back(rec);

        DepthRaster pred = synth_prediction(gt, spec.kind, spec.scale, spec.shift, spec.noise, rng.next());
        if (spec.half_resolution) pred = downsample_nearest(pred, std::max<std::size_t>(1, spec.width / 2),
                                                            std::max<std::size_t>(1, spec.height / 2));
        ds.predictions.emplace(rec.frame_id, std::move(pred));
        ds.gt.push_back(std::move(gt));
    }
    ds.meta.team = spec.team;
    ds.meta.prediction_kind = spec.kind;
    ds.meta.alignment = spec.alignment;
    ds.meta.notes = "synthetic reference submission";
    return ds;
}

/// Writes manifest.json, gt/*.png, submission/ and submission.zip under `dir`.
inline Dataset write_dataset(const fs::path& dir, const DatasetSpec& spec) {
    Dataset ds = make_dataset(spec);
    fs::create_directories(dir / "gt");
    for (std::size_t f = 0; f < ds.gt.size(); ++f) {
        auto& rec = ds.manifest.frames[f];
        write_file(dir / rec.gt, write_depth_png16(ds.gt[f]));
        rec.gt_path = dir / rec.gt;
    }
    write_file(dir / "manifest.json", manifest_to_json(ds.manifest));
    write_submission_dir(dir / "submission", ds.meta, ds.predictions);
    write_file(dir / "submission.zip", make_submission_zip(ds.meta, ds.predictions));
    return ds;
}

}  // namespace mdec::fixtures
