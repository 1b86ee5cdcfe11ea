#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <vector>

#include <zlib.h>

#include "dccl/chromap.hpp"
#include "dccl/errors.hpp"

namespace dccl {

namespace png_detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v >> 24));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v));
}

inline void put_chunk(std::vector<unsigned char>& out, const char type[4],
                      const std::vector<unsigned char>& data) {
    put_u32(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const uLong crc = ::crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
    put_u32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace png_detail

// Minimal 8-bit RGB PNG encoder (zlib deflate, filter type 0 per scanline).
// Key/value pairs go into tEXt chunks.
inline void write_png(const std::filesystem::path& path, const RgbImage& img,
                      const std::vector<std::pair<std::string, std::string>>& text = {}) {
    std::vector<unsigned char> raw;
    raw.reserve(static_cast<std::size_t>(img.h) * (img.w * 3 + 1));
    for (int y = 0; y < img.h; ++y) {
        raw.push_back(0);  // filter: none
        for (int x = 0; x < img.w; ++x) {
            const float* p = img.px(y, x);
            for (int c = 0; c < 3; ++c) {
                const float v = std::min(1.0f, std::max(0.0f, p[c]));
                raw.push_back(static_cast<unsigned char>(std::lround(v * 255.0f)));
            }
        }
    }

    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> comp(comp_len);
    if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
        throw IoError("png deflate failed for " + path.string());
    }
    comp.resize(comp_len);

    std::vector<unsigned char> out;
    const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    out.insert(out.end(), sig, sig + 8);

    std::vector<unsigned char> ihdr;
    png_detail::put_u32(ihdr, static_cast<std::uint32_t>(img.w));
    png_detail::put_u32(ihdr, static_cast<std::uint32_t>(img.h));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // color type: truecolor
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter
    ihdr.push_back(0);  // interlace
    png_detail::put_chunk(out, "IHDR", ihdr);
    for (const auto& [key, value] : text) {
        std::vector<unsigned char> t(key.begin(), key.end());
        t.push_back(0);
        t.insert(t.end(), value.begin(), value.end());
        png_detail::put_chunk(out, "tEXt", t);
    }
    png_detail::put_chunk(out, "IDAT", comp);
    png_detail::put_chunk(out, "IEND", {});

    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    if (!f) throw IoError("cannot open for write: " + path.string());
    const std::size_t n = std::fwrite(out.data(), 1, out.size(), f);
    std::fclose(f);
    if (n != out.size()) throw IoError("short write: " + path.string());
}

}  // namespace dccl
