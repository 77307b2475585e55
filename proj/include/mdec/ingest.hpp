#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdec/core.hpp"
#include "mdec/png.hpp"
#include "mdec/zip.hpp"

namespace mdec {

using Bytes = std::vector<std::uint8_t>;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

inline Bytes read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, path.string(), "cannot open for reading");
    Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw Error(ErrorCode::Io, path.string(), "read failed");
    return data;
}

inline void write_file(const fs::path& path, std::span<const std::uint8_t> data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, path.string(), "cannot open for writing");
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error(ErrorCode::Io, path.string(), "write failed");
}

inline void write_file(const fs::path& path, std::string_view text) {
    write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// ---------------------------------------------------------------------------
// Portable float map (single channel)
// ---------------------------------------------------------------------------

namespace detail {

inline bool is_pfm_space(std::uint8_t c) { return c == ' ' || c == '\n' || c == '\r' || c == '\t'; }

// Reads one whitespace-delimited header token starting at `pos`.
inline std::string_view pfm_token(std::span<const std::uint8_t> b, std::size_t& pos) {
    while (pos < b.size() && is_pfm_space(b[pos])) ++pos;
    std::size_t start = pos;
    while (pos < b.size() && !is_pfm_space(b[pos])) ++pos;
    if (start == pos) throw Error(ErrorCode::BadHeader, "pfm", "truncated header");
    return {reinterpret_cast<const char*>(b.data() + start), pos - start};
}

inline std::uint32_t byteswap32(std::uint32_t v) {
    return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

}  // namespace detail

/// Parses "Pf\n{w} {h}\n{scale}\n" + w*h float32. Negative scale means
/// little-endian samples. Rows are stored bottom-to-top in the file.
inline DepthRaster read_pfm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 3 || bytes[0] != 'P' || bytes[1] != 'f' || !detail::is_pfm_space(bytes[2]))
        throw Error(ErrorCode::BadMagic, "pfm", "expected single-channel 'Pf' magic");

    std::size_t pos = 2;
    auto parse_size = [&](std::string_view tok, const char* what) {
        std::size_t v = 0;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc{} || p != tok.data() + tok.size() || v == 0)
            throw Error(ErrorCode::BadHeader, what, "invalid dimension '" + std::string(tok) + "'");
        return v;
    };
    std::size_t width = parse_size(detail::pfm_token(bytes, pos), "width");
    std::size_t height = parse_size(detail::pfm_token(bytes, pos), "height");
    std::string scale_tok(detail::pfm_token(bytes, pos));
    char* end = nullptr;
    double scale = std::strtod(scale_tok.c_str(), &end);
    if (end != scale_tok.c_str() + scale_tok.size() || !std::isfinite(scale))
        throw Error(ErrorCode::BadHeader, "scale", "invalid scale '" + scale_tok + "'");
    if (scale == 0.0) throw Error(ErrorCode::ZeroScale, "scale", "scale must be non-zero");
    if (pos >= bytes.size()) throw Error(ErrorCode::TruncatedPayload, "pfm", "no payload");
    ++pos;  // single whitespace byte separates header and payload

    const std::size_t count = width * height;
    if (width > 0 && count / width != height)
        throw Error(ErrorCode::BadHeader, "pfm", "dimensions overflow");
    if (bytes.size() - pos < count * 4)
        throw Error(ErrorCode::TruncatedPayload, "pfm",
                    "expected " + std::to_string(count * 4) + " payload bytes, have " +
                        std::to_string(bytes.size() - pos));

    const bool file_le = scale < 0.0;
    const bool swap = file_le != (std::endian::native == std::endian::little);
    std::vector<double> values(count);
    for (std::size_t fy = 0; fy < height; ++fy) {
        std::size_t y = height - 1 - fy;
        for (std::size_t x = 0; x < width; ++x) {
            std::uint32_t word;
            std::memcpy(&word, bytes.data() + pos + 4 * (fy * width + x), 4);
            if (swap) word = detail::byteswap32(word);
            values[y * width + x] = static_cast<double>(std::bit_cast<float>(word));
        }
    }
    return DepthRaster::from_values(width, height, std::move(values));
}

/// Little-endian PFM. Values are narrowed to float32; invalid pixels become NaN.
inline Bytes write_pfm(const DepthRaster& raster) {
    std::string header = "Pf\n" + std::to_string(raster.width()) + " " + std::to_string(raster.height()) + "\n-1.0\n";
    Bytes out(header.begin(), header.end());
    out.resize(header.size() + raster.size() * 4);
    const bool swap = std::endian::native != std::endian::little;
    std::uint8_t* dst = out.data() + header.size();
    for (std::size_t fy = 0; fy < raster.height(); ++fy) {
        std::size_t y = raster.height() - 1 - fy;
        for (std::size_t x = 0; x < raster.width(); ++x) {
            float f = raster.is_valid(x, y) ? static_cast<float>(raster.at(x, y))
                                            : std::numeric_limits<float>::quiet_NaN();
            auto word = std::bit_cast<std::uint32_t>(f);
            if (swap) word = detail::byteswap32(word);
            std::memcpy(dst + 4 * (fy * raster.width() + x), &word, 4);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// 16-bit PNG depth
// ---------------------------------------------------------------------------

inline constexpr double kDefaultDepthDivisor = 256.0;

/// depth = stored / divisor; a stored 0 marks a missing return.
inline DepthRaster read_depth_png16(std::span<const std::uint8_t> bytes, double divisor = kDefaultDepthDivisor) {
    if (!(divisor > 0.0)) throw Error(ErrorCode::InvalidConfig, "divisor", "must be > 0");
    png::Gray16 img = png::decode_gray16(bytes);
    std::vector<double> values(img.samples.size());
    std::vector<std::uint8_t> valid(img.samples.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        valid[i] = img.samples[i] != 0;
        values[i] = static_cast<double>(img.samples[i]) / divisor;
    }
    return DepthRaster(img.width, img.height, std::move(values), std::move(valid));
}

/// Inverse of read_depth_png16: rounds depth*divisor, saturating at 65535.
/// Invalid or non-positive pixels are written as 0.
inline Bytes write_depth_png16(const DepthRaster& raster, double divisor = kDefaultDepthDivisor) {
    png::Gray16 img{raster.width(), raster.height(), std::vector<std::uint16_t>(raster.size(), 0)};
    for (std::size_t i = 0; i < raster.size(); ++i) {
        if (!raster.valid()[i]) continue;
        double q = std::round(raster.values()[i] * divisor);
        img.samples[i] = static_cast<std::uint16_t>(std::clamp(q, 0.0, 65535.0));
    }
    return png::encode_gray16(img);
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct FrameRecord {
    std::string frame_id;
    std::string category;
    std::string gt;      ///< as written in the manifest
    fs::path gt_path;    ///< resolved against the manifest directory
    CameraIntrinsics intrinsics;
    std::size_t width = 0;
    std::size_t height = 0;
};

struct Manifest {
    std::vector<FrameRecord> frames;
    double depth_divisor = kDefaultDepthDivisor;
};

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& obj, const std::string& key,
                                     const std::string& path) {
    if (!obj.is_object() || !obj.contains(key))
        throw Error(ErrorCode::MissingField, path.empty() ? key : path + "." + key, "required field missing");
    return obj.at(key);
}

template <typename T>
T field_as(const nlohmann::json& obj, const std::string& key, const std::string& path) {
    const auto& v = require(obj, key, path);
    std::string where = path.empty() ? key : path + "." + key;
    try {
        if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw Error(ErrorCode::ParseError, where, "expected a string");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw Error(ErrorCode::ParseError, where, "expected a number");
        } else {
            if (!v.is_number_unsigned()) throw Error(ErrorCode::ParseError, where, "expected a non-negative integer");
        }
        return v.get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, where, e.what());
    }
}

}  // namespace detail

inline Manifest parse_manifest(std::string_view text, const fs::path& base_dir) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, "manifest", e.what());
    }
    const auto& frames = detail::require(doc, "frames", "");
    if (!frames.is_array()) throw Error(ErrorCode::ParseError, "frames", "expected an array");

    Manifest m;
    if (doc.contains("depth_divisor")) m.depth_divisor = detail::field_as<double>(doc, "depth_divisor", "");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const auto& f = frames[i];
        std::string path = "frames[" + std::to_string(i) + "]";
        FrameRecord r;
        r.frame_id = detail::field_as<std::string>(f, "frame_id", path);
        r.category = detail::field_as<std::string>(f, "category", path);
        r.gt = detail::field_as<std::string>(f, "gt", path);
        const auto& k = detail::require(f, "intrinsics", path);
        std::string kpath = path + ".intrinsics";
        r.intrinsics.fx = detail::field_as<double>(k, "fx", kpath);
        r.intrinsics.fy = detail::field_as<double>(k, "fy", kpath);
        r.intrinsics.cx = detail::field_as<double>(k, "cx", kpath);
        r.intrinsics.cy = detail::field_as<double>(k, "cy", kpath);
        r.width = detail::field_as<std::size_t>(f, "width", path);
        r.height = detail::field_as<std::size_t>(f, "height", path);

        if (r.frame_id.empty()) throw Error(ErrorCode::ParseError, path + ".frame_id", "must be non-empty");
        if (r.category.empty()) throw Error(ErrorCode::ParseError, path + ".category", "must be non-empty");
        if (r.width == 0 || r.height == 0) throw Error(ErrorCode::ParseError, path, "width/height must be >= 1");
        try {
            r.intrinsics.validate_for(r.width, r.height);
        } catch (const Error& e) {
            throw Error(ErrorCode::ParseError, kpath + "." + e.subject(), e.what());
        }
        if (!seen.insert(r.frame_id).second)
            throw Error(ErrorCode::DuplicateFrameId, r.frame_id, "frame_id appears more than once");
        r.gt_path = base_dir / r.gt;
        m.frames.push_back(std::move(r));
    }
    return m;
}

inline Manifest load_manifest(const fs::path& path) {
    Bytes data = read_file(path);
    return parse_manifest(std::string_view(reinterpret_cast<const char*>(data.data()), data.size()),
                          path.parent_path());
}

inline std::string manifest_to_json(const Manifest& m) {
    nlohmann::ordered_json doc;
    doc["depth_divisor"] = m.depth_divisor;
    doc["frames"] = nlohmann::ordered_json::array();
    for (const auto& f : m.frames) {
        nlohmann::ordered_json j;
        j["frame_id"] = f.frame_id;
        j["category"] = f.category;
        j["gt"] = f.gt;
        j["intrinsics"] = {{"fx", f.intrinsics.fx}, {"fy", f.intrinsics.fy},
                           {"cx", f.intrinsics.cx}, {"cy", f.intrinsics.cy}};
        j["width"] = f.width;
        j["height"] = f.height;
        doc["frames"].push_back(std::move(j));
    }
    return doc.dump(2) + "\n";
}

/// Decodes the frame's GT by extension (.png as PNG16, .pfm as float map).
inline DepthRaster load_ground_truth(const FrameRecord& frame, double divisor = kDefaultDepthDivisor) {
    Bytes data = read_file(frame.gt_path);
    std::string ext = frame.gt_path.extension().string();
    DepthRaster gt = (ext == ".pfm") ? read_pfm(data) : read_depth_png16(data, divisor);
    if (gt.width() != frame.width || gt.height() != frame.height)
        throw Error(ErrorCode::InvalidRaster, frame.frame_id, "GT resolution does not match the manifest");
    return gt;
}

// ---------------------------------------------------------------------------
// Submissions
// ---------------------------------------------------------------------------

struct SubmissionMeta {
    std::string team;
    PredictionKind prediction_kind = PredictionKind::Metric;
    std::optional<std::string> notes;
    /// Alignment requested by the participant ("lse" or "median").
    std::optional<AlignmentMethod> alignment;

    friend bool operator==(const SubmissionMeta&, const SubmissionMeta&) = default;
};

struct Submission {
    SubmissionMeta meta;
    std::map<std::string, DepthRaster> predictions;
    std::vector<std::string> warnings;  ///< e.g. UnknownExtraFile
};

inline constexpr const char* kSubmissionMetaFile = "submission.json";

inline SubmissionMeta parse_submission_meta(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BadMeta, kSubmissionMetaFile, e.what());
    }
    if (!doc.is_object()) throw Error(ErrorCode::BadMeta, kSubmissionMetaFile, "expected an object");
    SubmissionMeta meta;
    if (!doc.contains("team") || !doc["team"].is_string() || doc["team"].get<std::string>().empty())
        throw Error(ErrorCode::BadMeta, "team", "non-empty string required");
    meta.team = doc["team"].get<std::string>();
    if (!doc.contains("prediction_kind") || !doc["prediction_kind"].is_string())
        throw Error(ErrorCode::BadMeta, "prediction_kind", "string required");
    auto kind = parse_prediction_kind(doc["prediction_kind"].get<std::string>());
    if (!kind) throw Error(ErrorCode::BadMeta, "prediction_kind", "unknown kind '" + doc["prediction_kind"].get<std::string>() + "'");
    meta.prediction_kind = *kind;
    if (doc.contains("notes") && !doc["notes"].is_null()) {
        if (!doc["notes"].is_string()) throw Error(ErrorCode::BadMeta, "notes", "string expected");
        meta.notes = doc["notes"].get<std::string>();
    }
    if (doc.contains("alignment") && !doc["alignment"].is_null()) {
        auto a = doc["alignment"].is_string() ? parse_alignment_method(doc["alignment"].get<std::string>()) : std::nullopt;
        if (!a || *a == AlignmentMethod::Identity)
            throw Error(ErrorCode::BadMeta, "alignment", "expected \"lse\" or \"median\"");
        meta.alignment = *a;
    }
    return meta;
}

inline std::string submission_meta_to_json(const SubmissionMeta& meta) {
    nlohmann::ordered_json doc;
    doc["team"] = meta.team;
    doc["prediction_kind"] = std::string(to_string(meta.prediction_kind));
    if (meta.notes) doc["notes"] = *meta.notes;
    if (meta.alignment) doc["alignment"] = std::string(to_string(*meta.alignment));
    return doc.dump(2) + "\n";
}

namespace detail {

// Accepts archives whose content sits under one top-level folder.
inline std::map<std::string, Bytes> strip_common_folder(std::map<std::string, Bytes> files) {
    if (files.count(kSubmissionMetaFile)) return files;
    std::string prefix;
    for (const auto& [name, _] : files) {
        auto slash = name.find('/');
        if (slash != std::string::npos && name.substr(slash + 1) == kSubmissionMetaFile) {
            if (!prefix.empty()) return files;
            prefix = name.substr(0, slash + 1);
        }
    }
    if (prefix.empty()) return files;
    std::map<std::string, Bytes> out;
    for (auto& [name, data] : files)
        if (name.rfind(prefix, 0) == 0) out.emplace(name.substr(prefix.size()), std::move(data));
    return out;
}

}  // namespace detail

/// Validates an in-memory file set against the manifest: submission.json plus
/// one {frame_id}.pfm per manifest frame. Extra files only produce warnings.
inline Submission parse_submission_files(std::map<std::string, Bytes> files, const Manifest& manifest) {
    files = detail::strip_common_folder(std::move(files));
    auto meta_it = files.find(kSubmissionMetaFile);
    if (meta_it == files.end()) throw Error(ErrorCode::BadMeta, kSubmissionMetaFile, "missing from submission");

    Submission sub;
    sub.meta = parse_submission_meta(
        std::string_view(reinterpret_cast<const char*>(meta_it->second.data()), meta_it->second.size()));

    std::set<std::string> expected{kSubmissionMetaFile};
    for (const auto& frame : manifest.frames) {
        std::string name = frame.frame_id + ".pfm";
        expected.insert(name);
        auto it = files.find(name);
        if (it == files.end()) throw Error(ErrorCode::MissingFrame, frame.frame_id, "no prediction in submission");
        try {
            sub.predictions.emplace(frame.frame_id, read_pfm(it->second));
        } catch (const Error& e) {
            throw Error(e.code(), frame.frame_id, e.what());
        }
    }
    for (const auto& [name, _] : files)
        if (!expected.count(name)) sub.warnings.push_back("UnknownExtraFile(" + name + ")");
    return sub;
}

inline Submission load_submission_bytes(std::span<const std::uint8_t> archive, const Manifest& manifest) {
    if (!zip::looks_like_zip(archive)) throw Error(ErrorCode::BadArchive, "submission", "not a zip archive");
    return parse_submission_files(zip::read_archive(archive), manifest);
}

/// Reads a submission from a plain directory or a .zip archive.
inline Submission load_submission(const fs::path& dir_or_zip, const Manifest& manifest) {
    std::error_code ec;
    if (fs::is_directory(dir_or_zip, ec)) {
        std::map<std::string, Bytes> files;
        for (const auto& entry : fs::directory_iterator(dir_or_zip)) {
            if (entry.is_regular_file()) files.emplace(entry.path().filename().string(), read_file(entry.path()));
        }
        return parse_submission_files(std::move(files), manifest);
    }
    if (!fs::exists(dir_or_zip, ec)) throw Error(ErrorCode::Io, dir_or_zip.string(), "submission not found");
    return load_submission_bytes(read_file(dir_or_zip), manifest);
}

inline std::map<std::string, Bytes> submission_files(const SubmissionMeta& meta,
                                                     const std::map<std::string, DepthRaster>& predictions) {
    std::map<std::string, Bytes> files;
    std::string meta_json = submission_meta_to_json(meta);
    files.emplace(kSubmissionMetaFile, Bytes(meta_json.begin(), meta_json.end()));
    for (const auto& [id, raster] : predictions) files.emplace(id + ".pfm", write_pfm(raster));
    return files;
}

inline Bytes make_submission_zip(const SubmissionMeta& meta, const std::map<std::string, DepthRaster>& predictions) {
    return zip::write_archive(submission_files(meta, predictions));
}

inline void write_submission_dir(const fs::path& dir, const SubmissionMeta& meta,
                                 const std::map<std::string, DepthRaster>& predictions) {
    fs::create_directories(dir);
    for (const auto& [name, data] : submission_files(meta, predictions)) write_file(dir / name, data);
}

}  // namespace mdec
