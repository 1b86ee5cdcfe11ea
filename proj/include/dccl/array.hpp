#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "dccl/errors.hpp"

namespace dccl {

struct Size {
    int h = 0;
    int w = 0;
    bool operator==(const Size&) const = default;
};

// H x W grayscale image, row-major, intensities in [0, 1].
struct Image {
    int h = 0;
    int w = 0;
    std::vector<float> v;

    Image() = default;
    Image(int h_, int w_, float fill = 0.f) : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, fill) {}

    float& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
    float at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
    Size size() const { return {h, w}; }
    std::size_t pixels() const { return v.size(); }

    bool operator==(const Image&) const = default;
};

// H x W class-id mask. Ids: 0 background, 1 left lung, 2 right lung.
struct LabelMask {
    int h = 0;
    int w = 0;
    std::vector<std::uint8_t> v;

    LabelMask() = default;
    LabelMask(int h_, int w_, std::uint8_t fill = 0)
        : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, fill) {}

    std::uint8_t& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
    std::uint8_t at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
    Size size() const { return {h, w}; }

    bool operator==(const LabelMask&) const = default;
};

constexpr int kNumClasses = 3;

// H x W x D per-pixel embedding field, pixel-major (d contiguous per pixel).
template <typename T>
struct EmbeddingField {
    int h = 0;
    int w = 0;
    int d = 0;
    std::vector<T> v;

    EmbeddingField() = default;
    EmbeddingField(int h_, int w_, int d_)
        : h(h_), w(w_), d(d_), v(static_cast<std::size_t>(h_) * w_ * d_, T(0)) {}

    T* pixel(int y, int x) { return v.data() + (static_cast<std::size_t>(y) * w + x) * d; }
    const T* pixel(int y, int x) const { return v.data() + (static_cast<std::size_t>(y) * w + x) * d; }
};

// Dense row-major matrix used for gathered pixel embeddings and metrics.
template <typename T>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<T> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, T(0)) {}

    T* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
    const T* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }
    T& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    T at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
};

// ---------------------------------------------------------------------------
// Raw little-endian float32 tensor files (dataset and checkpoint payloads).
// ---------------------------------------------------------------------------

static_assert(sizeof(float) == 4, "requires 32-bit IEEE float");

inline void write_f32_file(const std::filesystem::path& path, const float* data, std::size_t n) {
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    if (!f) throw IoError("cannot open for write: " + path.string());
    const std::size_t written = std::fwrite(data, sizeof(float), n, f);
    std::fclose(f);
    if (written != n) throw IoError("short write: " + path.string());
}

inline std::vector<float> read_f32_file(const std::filesystem::path& path, std::size_t expect) {
    std::FILE* f = std::fopen(path.string().c_str(), "rb");
    if (!f) throw IoError("cannot open for read: " + path.string());
    std::vector<float> out(expect);
    const std::size_t got = std::fread(out.data(), sizeof(float), expect, f);
    std::fclose(f);
    if (got != expect) throw IoError("short read: " + path.string());
    return out;
}

inline float clamp01(float x) { return std::min(1.0f, std::max(0.0f, x)); }

}  // namespace dccl
