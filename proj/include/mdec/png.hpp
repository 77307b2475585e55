#pragma once

// libpng wrappers for the two PNG flavours the toolkit touches: 16-bit
// single-channel depth maps and 1-bit edge-mask dumps.

#include <png.h>

#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

#include "mdec/core.hpp"

namespace mdec::png {

struct Gray16 {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint16_t> samples;  // row-major, top-to-bottom
};

namespace detail {

struct MemReader {
    std::span<const std::uint8_t> data;
    std::size_t pos = 0;
};

inline void read_cb(png_structp png, png_bytep out, png_size_t n) {
    auto* r = static_cast<MemReader*>(png_get_io_ptr(png));
    if (r->pos + n > r->data.size()) png_error(png, "unexpected end of data");
    std::memcpy(out, r->data.data() + r->pos, n);
    r->pos += n;
}

inline void write_cb(png_structp png, png_bytep in, png_size_t n) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), in, in + n);
}

inline void flush_cb(png_structp) {}
inline void quiet_warning(png_structp, png_const_charp) {}
inline void longjmp_error(png_structp png, png_const_charp) { png_longjmp(png, 1); }

/// Row bytes: one entry per image row, `row_bytes` each. Throws Io on failure.
inline std::vector<std::uint8_t> encode(std::size_t width, std::size_t height, int bit_depth,
                                        const std::vector<std::uint8_t>& packed,
                                        std::size_t row_bytes) {
    std::vector<std::uint8_t> out;
    std::vector<png_bytep> rows(height);
    for (std::size_t y = 0; y < height; ++y)
        rows[y] = const_cast<png_bytep>(packed.data() + y * row_bytes);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, longjmp_error, quiet_warning);
    if (!png) throw Error(ErrorCode::Io, "png", "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw Error(ErrorCode::Io, "png", "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorCode::Io, "png", "libpng encode failure");
    }
    png_set_write_fn(png, &out, write_cb, flush_cb);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

}  // namespace detail

inline bool has_png_signature(std::span<const std::uint8_t> bytes) {
    return bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0;
}

/// Decodes a 16-bit single-channel PNG. Throws NotPng16 for any other PNG
/// flavour (or non-PNG input) and DecodeError for corrupt streams.
inline Gray16 decode_gray16(std::span<const std::uint8_t> bytes) {
    if (!has_png_signature(bytes)) throw Error(ErrorCode::NotPng16, "png", "missing PNG signature");

    Gray16 img;
    std::vector<std::uint8_t> raw;
    std::vector<png_bytep> rows;
    detail::MemReader reader{bytes, 0};
    bool wrong_format = false;

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::longjmp_error,
                                             detail::quiet_warning);
    if (!png) throw Error(ErrorCode::DecodeError, "png", "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw Error(ErrorCode::DecodeError, "png", "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorCode::DecodeError, "png", "corrupt PNG stream");
    }
    png_set_read_fn(png, &reader, detail::read_cb);
    png_read_info(png, info);
    png_uint_32 w = 0, h = 0;
    int depth = 0, color = 0, interlace = 0;
    png_get_IHDR(png, info, &w, &h, &depth, &color, &interlace, nullptr, nullptr);
    if (depth != 16 || color != PNG_COLOR_TYPE_GRAY) {
        wrong_format = true;
    } else {
        png_set_interlace_handling(png);
        png_read_update_info(png, info);
        std::size_t row_bytes = png_get_rowbytes(png, info);
        raw.resize(row_bytes * h);
        rows.resize(h);
        for (png_uint_32 y = 0; y < h; ++y) rows[y] = raw.data() + y * row_bytes;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
        img.width = w;
        img.height = h;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    if (wrong_format) throw Error(ErrorCode::NotPng16, "png", "expected 16-bit single-channel PNG");

    img.samples.resize(img.width * img.height);
    for (std::size_t i = 0; i < img.samples.size(); ++i)
        img.samples[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    return img;
}

inline std::vector<std::uint8_t> encode_gray16(const Gray16& img) {
    std::vector<std::uint8_t> packed(img.samples.size() * 2);
    for (std::size_t i = 0; i < img.samples.size(); ++i) {
        packed[2 * i] = static_cast<std::uint8_t>(img.samples[i] >> 8);
        packed[2 * i + 1] = static_cast<std::uint8_t>(img.samples[i] & 0xff);
    }
    return detail::encode(img.width, img.height, 16, packed, img.width * 2);
}

/// 1-bit grayscale PNG, white where the mask is set.
inline std::vector<std::uint8_t> encode_mask(const PixelMask& mask) {
    std::size_t row_bytes = (mask.width + 7) / 8;
    std::vector<std::uint8_t> packed(row_bytes * mask.height, 0);
    for (std::size_t y = 0; y < mask.height; ++y)
        for (std::size_t x = 0; x < mask.width; ++x)
            if (mask.at(x, y)) packed[y * row_bytes + x / 8] |= static_cast<std::uint8_t>(0x80u >> (x % 8));
    return detail::encode(mask.width, mask.height, 1, packed, row_bytes);
}

}  // namespace mdec::png
