#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mdec {

enum class ErrorCode {
    InvalidConfig,
    InvalidRaster,
    InvalidIntrinsics,
    BadMagic,
    BadHeader,
    TruncatedPayload,
    ZeroScale,
    NotPng16,
    DecodeError,
    ParseError,
    DuplicateFrameId,
    MissingField,
    MissingFrame,
    BadMeta,
    BadArchive,
    AllInvalid,
    TooFewPixels,
    NonPositivePrediction,
    EmptyMask,
    InvalidTransform,
    Io,
    PhaseClosed,
    RateLimited,
    UnknownPhase,
    NotFound,
    Forbidden,
    Unauthorized,
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::InvalidRaster: return "InvalidRaster";
        case ErrorCode::InvalidIntrinsics: return "InvalidIntrinsics";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::BadHeader: return "BadHeader";
        case ErrorCode::TruncatedPayload: return "TruncatedPayload";
        case ErrorCode::ZeroScale: return "ZeroScale";
        case ErrorCode::NotPng16: return "NotPng16";
        case ErrorCode::DecodeError: return "DecodeError";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::DuplicateFrameId: return "DuplicateFrameId";
        case ErrorCode::MissingField: return "MissingField";
        case ErrorCode::MissingFrame: return "MissingFrame";
        case ErrorCode::BadMeta: return "BadMeta";
        case ErrorCode::BadArchive: return "BadArchive";
        case ErrorCode::AllInvalid: return "AllInvalid";
        case ErrorCode::TooFewPixels: return "TooFewPixels";
        case ErrorCode::NonPositivePrediction: return "NonPositivePrediction";
        case ErrorCode::EmptyMask: return "EmptyMask";
        case ErrorCode::InvalidTransform: return "InvalidTransform";
        case ErrorCode::Io: return "Io";
        case ErrorCode::PhaseClosed: return "PhaseClosed";
        case ErrorCode::RateLimited: return "RateLimited";
        case ErrorCode::UnknownPhase: return "UnknownPhase";
        case ErrorCode::NotFound: return "NotFound";
        case ErrorCode::Forbidden: return "Forbidden";
        case ErrorCode::Unauthorized: return "Unauthorized";
    }
    return "Unknown";
}

/// Every failure in the toolkit is reported as an `Error`. `subject()` names
/// the offending field, frame id or path when there is one.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, std::string subject, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + "(" + subject + "): " + message),
          code_(code),
          subject_(std::move(subject)) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& subject() const noexcept { return subject_; }

private:
    ErrorCode code_;
    std::string subject_;
};

// ---------------------------------------------------------------------------
// DepthRaster
// ---------------------------------------------------------------------------

/// Dense row-major grid of per-pixel values with a validity mask.
///
/// Values are meters for depth, 1/meters for disparity and unitless for
/// affine-invariant codes. Invalid pixels always hold a quiet NaN so that two
/// rasters with the same mask and the same valid values compare equal.
class DepthRaster {
public:
    DepthRaster() = default;

    /// Takes values and an explicit mask. Throws InvalidRaster when shapes
    /// disagree or a valid pixel is not finite.
    DepthRaster(std::size_t width, std::size_t height, std::vector<double> values,
                std::vector<std::uint8_t> valid)
        : width_(width), height_(height), values_(std::move(values)), valid_(std::move(valid)) {
        if (width_ < 1 || height_ < 1) {
            throw Error(ErrorCode::InvalidRaster, "shape", "width and height must be >= 1");
        }
        if (values_.size() != width_ * height_ || valid_.size() != width_ * height_) {
            throw Error(ErrorCode::InvalidRaster, "shape",
                        "values/valid must hold width*height entries");
        }
        for (std::size_t i = 0; i < values_.size(); ++i) {
            if (valid_[i]) {
                if (!std::isfinite(values_[i])) {
                    throw Error(ErrorCode::InvalidRaster, "values",
                                "non-finite value at valid pixel " + std::to_string(i));
                }
                valid_[i] = 1;
            } else {
                values_[i] = std::numeric_limits<double>::quiet_NaN();
            }
        }
    }

    /// Mask derived from the values: every finite entry is valid.
    static DepthRaster from_values(std::size_t width, std::size_t height,
                                   std::vector<double> values) {
        std::vector<std::uint8_t> valid(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) valid[i] = std::isfinite(values[i]) ? 1 : 0;
        return DepthRaster(width, height, std::move(values), std::move(valid));
    }

    static DepthRaster filled(std::size_t width, std::size_t height, double value) {
        return from_values(width, height, std::vector<double>(width * height, value));
    }

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t size() const noexcept { return values_.size(); }

    std::span<const double> values() const noexcept { return values_; }
    std::span<const std::uint8_t> valid() const noexcept { return valid_; }

    double at(std::size_t x, std::size_t y) const { return values_[y * width_ + x]; }
    bool is_valid(std::size_t x, std::size_t y) const { return valid_[y * width_ + x] != 0; }

    std::size_t valid_count() const noexcept {
        std::size_t n = 0;
        for (auto v : valid_) n += v;
        return n;
    }

    bool same_shape(const DepthRaster& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_;
    }

    friend bool operator==(const DepthRaster& a, const DepthRaster& b) {
        if (!a.same_shape(b) || a.valid_ != b.valid_) return false;
        for (std::size_t i = 0; i < a.values_.size(); ++i) {
            if (a.valid_[i] && a.values_[i] != b.values_[i]) return false;
        }
        return true;
    }

private:
    std::size_t width_ = 0;
    std::size_t height_ = 0;
    std::vector<double> values_;
    std::vector<std::uint8_t> valid_;
};

/// Row-major boolean pixel mask; shares shape conventions with DepthRaster.
struct PixelMask {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> bits;

    PixelMask() = default;
    PixelMask(std::size_t w, std::size_t h) : width(w), height(h), bits(w * h, 0) {}

    bool operator[](std::size_t i) const { return bits[i] != 0; }
    bool at(std::size_t x, std::size_t y) const { return bits[y * width + x] != 0; }
    void set(std::size_t x, std::size_t y, bool on = true) { bits[y * width + x] = on ? 1 : 0; }
    std::size_t count() const noexcept {
        std::size_t n = 0;
        for (auto b : bits) n += b;
        return n;
    }
    friend bool operator==(const PixelMask&, const PixelMask&) = default;
};

/// Mask of pixels valid in both rasters. Shapes must match.
inline PixelMask joint_valid(const DepthRaster& a, const DepthRaster& b) {
    if (!a.same_shape(b)) throw Error(ErrorCode::InvalidRaster, "shape", "raster shapes differ");
    PixelMask m(a.width(), a.height());
    for (std::size_t i = 0; i < a.size(); ++i) m.bits[i] = (a.valid()[i] && b.valid()[i]) ? 1 : 0;
    return m;
}

/// Copy of `raster` with validity further restricted to `mask`.
inline DepthRaster restrict_to(const DepthRaster& raster, const PixelMask& mask) {
    std::vector<double> v(raster.values().begin(), raster.values().end());
    std::vector<std::uint8_t> ok(raster.valid().begin(), raster.valid().end());
    for (std::size_t i = 0; i < ok.size(); ++i) ok[i] = ok[i] && mask.bits[i];
    return DepthRaster(raster.width(), raster.height(), std::move(v), std::move(ok));
}

// ---------------------------------------------------------------------------
// PredictionKind
// ---------------------------------------------------------------------------

enum class PredictionKind { Disparity, AffineInvariant, ScaleInvariant, Metric };

inline std::string_view to_string(PredictionKind kind) {
    switch (kind) {
        case PredictionKind::Disparity: return "disparity";
        case PredictionKind::AffineInvariant: return "affine_invariant";
        case PredictionKind::ScaleInvariant: return "scale_invariant";
        case PredictionKind::Metric: return "metric";
    }
    return "metric";
}

inline std::optional<PredictionKind> parse_prediction_kind(std::string_view s) {
    if (s == "disparity") return PredictionKind::Disparity;
    if (s == "affine_invariant") return PredictionKind::AffineInvariant;
    if (s == "scale_invariant") return PredictionKind::ScaleInvariant;
    if (s == "metric") return PredictionKind::Metric;
    return std::nullopt;
}

inline constexpr PredictionKind kAllPredictionKinds[] = {
    PredictionKind::Disparity, PredictionKind::AffineInvariant, PredictionKind::ScaleInvariant,
    PredictionKind::Metric};

// ---------------------------------------------------------------------------
// CameraIntrinsics
// ---------------------------------------------------------------------------

struct CameraIntrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;

    void validate() const {
        if (!(fx > 0.0) || !std::isfinite(fx)) throw Error(ErrorCode::InvalidIntrinsics, "fx", "must be > 0");
        if (!(fy > 0.0) || !std::isfinite(fy)) throw Error(ErrorCode::InvalidIntrinsics, "fy", "must be > 0");
        if (!std::isfinite(cx)) throw Error(ErrorCode::InvalidIntrinsics, "cx", "must be finite");
        if (!std::isfinite(cy)) throw Error(ErrorCode::InvalidIntrinsics, "cy", "must be finite");
    }

    void validate_for(std::size_t width, std::size_t height) const {
        validate();
        if (cx < 0.0 || cx > static_cast<double>(width))
            throw Error(ErrorCode::InvalidIntrinsics, "cx", "principal point outside [0, width]");
        if (cy < 0.0 || cy > static_cast<double>(height))
            throw Error(ErrorCode::InvalidIntrinsics, "cy", "principal point outside [0, height]");
    }

    friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

// ---------------------------------------------------------------------------
// AffineAlignment
// ---------------------------------------------------------------------------

enum class AlignmentMethod { LseAffine, MedianScale, Identity };

inline std::string_view to_string(AlignmentMethod m) {
    switch (m) {
        case AlignmentMethod::LseAffine: return "lse";
        case AlignmentMethod::MedianScale: return "median";
        case AlignmentMethod::Identity: return "identity";
    }
    return "identity";
}

inline std::optional<AlignmentMethod> parse_alignment_method(std::string_view s) {
    if (s == "lse") return AlignmentMethod::LseAffine;
    if (s == "median") return AlignmentMethod::MedianScale;
    if (s == "identity") return AlignmentMethod::Identity;
    return std::nullopt;
}

/// Fitted (scale, shift) pair mapping prediction space to metric depth:
/// depth = scale * prediction + shift.
struct AffineAlignment {
    double scale = 1.0;
    double shift = 0.0;
    AlignmentMethod method = AlignmentMethod::Identity;
    /// Near-constant prediction; the LSE fit fell back to a pure shift.
    bool degenerate = false;
    /// The fit was repeated after discarding 3-sigma residual outliers.
    bool robust_refit = false;

    static AffineAlignment identity() { return {}; }

    bool finite() const { return std::isfinite(scale) && std::isfinite(shift); }

    friend bool operator==(const AffineAlignment&, const AffineAlignment&) = default;
};

// ---------------------------------------------------------------------------
// EvalConfig
// ---------------------------------------------------------------------------

struct EvalConfig {
    double depth_min = 0.001;   ///< epsilon, meters
    double depth_max = 100.0;   ///< meters
    double fscore_tau = 0.10;   ///< meters
    double edge_trunc = 10.0;   ///< theta, pixels
    double edge_sigma = 1.0;    ///< pixels
    double edge_low_q = 0.90;
    double edge_high_q = 0.95;
    double delta_base = 1.25;
    /// Single re-fit of the LSE alignment after dropping residuals beyond 3 sigma.
    bool robust_refit = false;

    friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

/// Throws InvalidConfig naming the first violated field.
inline void validate_config(const EvalConfig& cfg) {
    auto fail = [](const char* field, const char* reason) {
        throw Error(ErrorCode::InvalidConfig, field, reason);
    };
    if (!(cfg.depth_min > 0.0)) fail("depth_min", "must be > 0");
    if (!(cfg.depth_max > cfg.depth_min) || !std::isfinite(cfg.depth_max))
        fail("depth_max", "must be finite and > depth_min");
    if (!(cfg.fscore_tau > 0.0) || !std::isfinite(cfg.fscore_tau)) fail("fscore_tau", "must be > 0");
    if (!(cfg.edge_trunc >= 1.0) || !std::isfinite(cfg.edge_trunc)) fail("edge_trunc", "must be >= 1");
    if (!(cfg.edge_sigma > 0.0) || !std::isfinite(cfg.edge_sigma)) fail("edge_sigma", "must be > 0");
    if (!(cfg.edge_low_q > 0.0 && cfg.edge_low_q < 1.0)) fail("edge_low_q", "must lie in (0, 1)");
    if (!(cfg.edge_high_q > cfg.edge_low_q && cfg.edge_high_q < 1.0))
        fail("edge_high_q", "must lie in (edge_low_q, 1)");
    if (!(cfg.delta_base > 1.0) || !std::isfinite(cfg.delta_base)) fail("delta_base", "must be > 1");
}

/// GT validity rule: finite, strictly positive and not beyond depth_max.
inline DepthRaster mask_ground_truth(const DepthRaster& gt, const EvalConfig& cfg) {
    std::vector<double> v(gt.values().begin(), gt.values().end());
    std::vector<std::uint8_t> ok(gt.valid().begin(), gt.valid().end());
    for (std::size_t i = 0; i < v.size(); ++i) {
        ok[i] = ok[i] && std::isfinite(v[i]) && v[i] > 0.0 && v[i] <= cfg.depth_max;
    }
    return DepthRaster(gt.width(), gt.height(), std::move(v), std::move(ok));
}

// ---------------------------------------------------------------------------
// MetricReport
// ---------------------------------------------------------------------------

/// Per-frame metric vector. A metric that could not be computed on a frame
/// (no edges, empty mask, failed alignment) is left empty.
struct MetricReport {
    std::optional<double> mae;
    std::optional<double> rmse;
    std::optional<double> absrel;
    std::optional<double> delta1;
    std::optional<double> delta2;
    std::optional<double> delta3;
    std::optional<double> f_score;
    std::optional<double> f_edges;
    std::optional<double> edge_acc;
    std::optional<double> edge_comp;
    std::size_t valid_pixel_count = 0;

    friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

/// Stable list of metric names with member accessors, in report column order.
struct MetricField {
    const char* name;
    std::optional<double> MetricReport::*member;
};

inline constexpr MetricField kMetricFields[] = {
    {"mae", &MetricReport::mae},         {"rmse", &MetricReport::rmse},
    {"absrel", &MetricReport::absrel},   {"delta1", &MetricReport::delta1},
    {"delta2", &MetricReport::delta2},   {"delta3", &MetricReport::delta3},
    {"f_score", &MetricReport::f_score}, {"f_edges", &MetricReport::f_edges},
    {"edge_acc", &MetricReport::edge_acc}, {"edge_comp", &MetricReport::edge_comp},
};

}  // namespace mdec
