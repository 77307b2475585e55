#pragma once

// Minimal zip container support (stored and deflate entries, no zip64,
// no encryption). Enough to carry submission archives.

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mdec/core.hpp"

namespace mdec::zip {

using Bytes = std::vector<std::uint8_t>;

namespace detail {

inline std::uint16_t rd16(std::span<const std::uint8_t> b, std::size_t off) {
    if (off + 2 > b.size()) throw Error(ErrorCode::BadArchive, "zip", "truncated record");
    return static_cast<std::uint16_t>(b[off] | (b[off + 1] << 8));
}

inline std::uint32_t rd32(std::span<const std::uint8_t> b, std::size_t off) {
    if (off + 4 > b.size()) throw Error(ErrorCode::BadArchive, "zip", "truncated record");
    return static_cast<std::uint32_t>(b[off]) | (static_cast<std::uint32_t>(b[off + 1]) << 8) |
           (static_cast<std::uint32_t>(b[off + 2]) << 16) |
           (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

inline void wr16(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void wr32(Bytes& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline Bytes inflate_raw(std::span<const std::uint8_t> in, std::size_t expected) {
    Bytes out(expected);
    z_stream zs{};
    if (inflateInit2(&zs, -MAX_WBITS) != Z_OK)
        throw Error(ErrorCode::BadArchive, "zip", "inflateInit failed");
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    int rc = inflate(&zs, Z_FINISH);
    std::size_t produced = zs.total_out;
    inflateEnd(&zs);
    if (rc != Z_STREAM_END || produced != expected)
        throw Error(ErrorCode::BadArchive, "zip", "corrupt deflate stream");
    return out;
}

inline Bytes deflate_raw(std::span<const std::uint8_t> in) {
    z_stream zs{};
    if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, -MAX_WBITS, 8, Z_DEFAULT_STRATEGY) != Z_OK)
        throw Error(ErrorCode::Io, "zip", "deflateInit failed");
    Bytes out(deflateBound(&zs, static_cast<uLong>(in.size())));
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    int rc = deflate(&zs, Z_FINISH);
    out.resize(zs.total_out);
    deflateEnd(&zs);
    if (rc != Z_STREAM_END) throw Error(ErrorCode::Io, "zip", "deflate failed");
    return out;
}

}  // namespace detail

inline bool looks_like_zip(std::span<const std::uint8_t> bytes) {
    return bytes.size() >= 4 && bytes[0] == 'P' && bytes[1] == 'K' && bytes[2] == 3 && bytes[3] == 4;
}

/// Decodes every file entry. Directory entries are skipped. Throws BadArchive.
inline std::map<std::string, Bytes> read_archive(std::span<const std::uint8_t> bytes) {
    using detail::rd16;
    using detail::rd32;
    if (bytes.size() < 22) throw Error(ErrorCode::BadArchive, "zip", "too short for a zip archive");

    std::size_t eocd = std::string::npos;
    std::size_t lowest = bytes.size() > 22 + 65535 ? bytes.size() - 22 - 65535 : 0;
    for (std::size_t pos = bytes.size() - 22 + 1; pos-- > lowest;) {
        if (rd32(bytes, pos) == 0x06054b50u) {
            eocd = pos;
            break;
        }
    }
    if (eocd == std::string::npos) throw Error(ErrorCode::BadArchive, "zip", "no end-of-central-directory");

    std::size_t entries = rd16(bytes, eocd + 10);
    std::size_t cd_offset = rd32(bytes, eocd + 16);
    if (cd_offset == 0xffffffffu) throw Error(ErrorCode::BadArchive, "zip", "zip64 is not supported");

    std::map<std::string, Bytes> files;
    std::size_t pos = cd_offset;
    for (std::size_t i = 0; i < entries; ++i) {
        if (rd32(bytes, pos) != 0x02014b50u)
            throw Error(ErrorCode::BadArchive, "zip", "bad central directory signature");
        std::uint16_t flags = rd16(bytes, pos + 8);
        std::uint16_t method = rd16(bytes, pos + 10);
        std::uint32_t crc = rd32(bytes, pos + 16);
        std::uint32_t csize = rd32(bytes, pos + 20);
        std::uint32_t usize = rd32(bytes, pos + 24);
        std::uint16_t nlen = rd16(bytes, pos + 28);
        std::uint16_t elen = rd16(bytes, pos + 30);
        std::uint16_t clen = rd16(bytes, pos + 32);
        std::uint32_t local = rd32(bytes, pos + 42);
        if (pos + 46 + nlen > bytes.size()) throw Error(ErrorCode::BadArchive, "zip", "truncated entry name");
        std::string name(reinterpret_cast<const char*>(bytes.data() + pos + 46), nlen);
        pos += 46u + nlen + elen + clen;

        if (flags & 0x1) throw Error(ErrorCode::BadArchive, name, "encrypted entries are not supported");
        if (!name.empty() && name.back() == '/') continue;

        if (rd32(bytes, local) != 0x04034b50u)
            throw Error(ErrorCode::BadArchive, name, "bad local header signature");
        std::size_t data = local + 30u + rd16(bytes, local + 26) + rd16(bytes, local + 28);
        if (data + csize > bytes.size()) throw Error(ErrorCode::BadArchive, name, "truncated entry data");
        auto payload = bytes.subspan(data, csize);

        Bytes content;
        if (method == 0) {
            if (csize != usize) throw Error(ErrorCode::BadArchive, name, "stored size mismatch");
            content.assign(payload.begin(), payload.end());
        } else if (method == 8) {
            content = detail::inflate_raw(payload, usize);
        } else {
            throw Error(ErrorCode::BadArchive, name, "unsupported compression method");
        }
        if (crc32(0L, content.data(), static_cast<uInt>(content.size())) != crc)
            throw Error(ErrorCode::BadArchive, name, "CRC mismatch");
        files.emplace(std::move(name), std::move(content));
    }
    return files;
}

/// Builds a deflate-compressed archive. Entries are written in map order with
/// a fixed timestamp, so the same input always yields the same bytes.
inline Bytes write_archive(const std::map<std::string, Bytes>& files) {
    using detail::wr16;
    using detail::wr32;
    Bytes out;
    Bytes central;
    constexpr std::uint16_t kDosTime = 0;
    constexpr std::uint16_t kDosDate = (0 << 9) | (1 << 5) | 1;  // 1980-01-01

    for (const auto& [name, content] : files) {
        Bytes packed = detail::deflate_raw(content);
        std::uint16_t method = 8;
        if (packed.size() >= content.size()) {
            packed = content;
            method = 0;
        }
        auto crc = static_cast<std::uint32_t>(crc32(0L, content.data(), static_cast<uInt>(content.size())));
        auto offset = static_cast<std::uint32_t>(out.size());

        wr32(out, 0x04034b50u);
        wr16(out, 20);
        wr16(out, 0);
        wr16(out, method);
        wr16(out, kDosTime);
        wr16(out, kDosDate);
        wr32(out, crc);
        wr32(out, static_cast<std::uint32_t>(packed.size()));
        wr32(out, static_cast<std::uint32_t>(content.size()));
        wr16(out, static_cast<std::uint16_t>(name.size()));
        wr16(out, 0);
        out.insert(out.end(), name.begin(), name.end());
        out.insert(out.end(), packed.begin(), packed.end());

        wr32(central, 0x02014b50u);
        wr16(central, 20);
        wr16(central, 20);
        wr16(central, 0);
        wr16(central, method);
        wr16(central, kDosTime);
        wr16(central, kDosDate);
        wr32(central, crc);
        wr32(central, static_cast<std::uint32_t>(packed.size()));
        wr32(central, static_cast<std::uint32_t>(content.size()));
        wr16(central, static_cast<std::uint16_t>(name.size()));
        wr16(central, 0);
        wr16(central, 0);
        wr16(central, 0);
        wr16(central, 0);
        wr32(central, 0);
        wr32(central, offset);
        central.insert(central.end(), name.begin(), name.end());
    }

    auto cd_offset = static_cast<std::uint32_t>(out.size());
    out.insert(out.end(), central.begin(), central.end());
    wr32(out, 0x06054b50u);
    wr16(out, 0);
    wr16(out, 0);
    wr16(out, static_cast<std::uint16_t>(files.size()));
    wr16(out, static_cast<std::uint16_t>(files.size()));
    wr32(out, static_cast<std::uint32_t>(central.size()));
    wr32(out, cd_offset);
    wr16(out, 0);
    return out;
}

}  // namespace mdec::zip
