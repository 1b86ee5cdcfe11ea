#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dccl/affine.hpp"
#include "dccl/array.hpp"
#include "dccl/errors.hpp"
#include "dccl/rng.hpp"

namespace dccl {

// Geometric augmentation. Rotation is drawn symmetrically about zero, the
// crop scale is a fraction of the input area, and the crop is resized to
// `out`. The whole pipeline is recorded as one AffineMap.
struct GeomAugmentConfig {
    double rotation_max_deg = 0.0;   // draw in [-max, +max]
    double crop_scale_lo = 1.0;      // area fraction
    double crop_scale_hi = 1.0;
    Size out{0, 0};                  // output size; {0,0} means same as input

    void validate() const {
        require(rotation_max_deg >= 0.0 && rotation_max_deg <= 180.0, "augment.bad_config",
                "rotation range must lie in [-180, 180] degrees");
        require(crop_scale_lo > 0.0 && crop_scale_lo <= crop_scale_hi && crop_scale_hi <= 1.0,
                "augment.bad_config", "crop scale range must be within (0, 1]");
        require((out.h == 0 && out.w == 0) || (out.h >= 8 && out.w >= 8), "augment.bad_config",
                "output size must be at least 8x8");
    }
};

struct PhotoAugmentConfig {
    double brightness_max = 0.0;      // additive delta drawn in [-max, +max]
    double contrast_lo = 1.0;         // multiplier about 0.5
    double contrast_hi = 1.0;
    double blur_sigma_lo = 0.5;
    double blur_sigma_hi = 1.5;
    double solarize_lo = 0.5;
    double solarize_hi = 0.9;
    double p_brightness = 0.0;
    double p_contrast = 0.0;
    double p_blur = 0.0;
    double p_solarize = 0.0;

    void validate() const {
        auto prob_ok = [](double p) { return p >= 0.0 && p <= 1.0; };
        require(prob_ok(p_brightness) && prob_ok(p_contrast) && prob_ok(p_blur) && prob_ok(p_solarize),
                "augment.bad_config", "photometric probabilities must be in [0, 1]");
        require(p_brightness == 0.0 || brightness_max > 0.0, "augment.bad_config",
                "brightness jitter enabled with degenerate range");
        require(p_contrast == 0.0 || (contrast_lo > 0.0 && contrast_lo <= contrast_hi),
                "augment.bad_config", "contrast range invalid");
        require(p_blur == 0.0 || (blur_sigma_lo > 0.0 && blur_sigma_lo <= blur_sigma_hi),
                "augment.bad_config", "blur sigma range invalid");
        require(p_solarize == 0.0 || (solarize_lo <= solarize_hi), "augment.bad_config",
                "solarization threshold range invalid");
    }
};

enum class PhotoOpKind { Brightness, Contrast, Blur, Solarize };

struct PhotoOp {
    PhotoOpKind kind;
    double param;  // delta / multiplier / sigma / threshold
};

// Everything needed to replay an augmentation bit-exactly.
struct AugmentRecord {
    AffineMap geom;
    double rotation_rad = 0.0;
    double crop_scale = 1.0;
    double crop_x = 0.0, crop_y = 0.0;   // top-left pixel-center of the crop window
    double crop_w = 0.0, crop_h = 0.0;   // crop window size in source pixels
    std::vector<PhotoOp> photo;
    std::uint64_t seed = 0;
};

// Map realizing "crop the window whose top-left pixel center is (cx, cy) and
// extent (cw, ch) source pixels, then resize to out". Uses the usual
// pixel-area convention: pixel i covers [i-0.5, i+0.5].
inline AffineMap crop_resize_map(double cx, double cy, double cw, double ch, Size out) {
    const double sx = out.w / cw;
    const double sy = out.h / ch;
    AffineMap m;
    m.m = {sx, 0, (0.5 - cx) * sx - 0.5, 0, sy, (0.5 - cy) * sy - 0.5, 0, 0, 1};
    return m;
}

inline std::pair<AffineMap, AugmentRecord> draw_geometric(const GeomAugmentConfig& cfg, Rng& rng,
                                                          Size input) {
    cfg.validate();
    const Size out = (cfg.out.h == 0) ? input : cfg.out;

    AugmentRecord rec;
    rec.rotation_rad = rng.uniform(-cfg.rotation_max_deg, cfg.rotation_max_deg) * M_PI / 180.0;
    rec.crop_scale = rng.uniform(cfg.crop_scale_lo, cfg.crop_scale_hi);

    const double side = std::sqrt(rec.crop_scale);
    rec.crop_h = input.h * side;
    rec.crop_w = input.w * side;
    if (rec.crop_h < 1.0 || rec.crop_w < 1.0) {
        throw DegenerateCrop("crop collapsed below one pixel: " + std::to_string(rec.crop_w) + "x" +
                             std::to_string(rec.crop_h));
    }
    rec.crop_y = rng.uniform(0.0, input.h - rec.crop_h);
    rec.crop_x = rng.uniform(0.0, input.w - rec.crop_w);

    const AffineMap rot = AffineMap::rotate_about_center(rec.rotation_rad, input);
    const AffineMap crop = crop_resize_map(rec.crop_x, rec.crop_y, rec.crop_w, rec.crop_h, out);
    rec.geom = compose(rot, crop);
    return {rec.geom, rec};
}

// Bilinear sample with zero fill outside [0, w-1] x [0, h-1].
inline float bilinear_at(const Image& img, double x, double y) {
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0;
    const double fy = y - y0;
    auto px = [&](int yy, int xx) -> double {
        if (xx < 0 || yy < 0 || xx >= img.w || yy >= img.h) return 0.0;
        return img.at(yy, xx);
    };
    const double top = px(y0, x0) * (1 - fx) + px(y0, x0 + 1) * fx;
    const double bot = px(y0 + 1, x0) * (1 - fx) + px(y0 + 1, x0 + 1) * fx;
    return static_cast<float>(top * (1 - fy) + bot * fy);
}

// Resamples the image under `map` (input frame -> output frame).
inline Image apply_geometric(const Image& img, const AffineMap& map, Size out) {
    const AffineMap inv = invert(map);
    Image dst(out.h, out.w);
    for (int y = 0; y < out.h; ++y) {
        for (int x = 0; x < out.w; ++x) {
            const Point p = map_point(inv, {static_cast<double>(x), static_cast<double>(y)});
            dst.at(y, x) = bilinear_at(img, p.x, p.y);
        }
    }
    return dst;
}

// Nearest-neighbor transport for categorical masks; out-of-bounds is background.
inline LabelMask transport_mask(const LabelMask& mask, const AffineMap& map, Size out) {
    const AffineMap inv = invert(map);
    LabelMask dst(out.h, out.w, 0);
    for (int y = 0; y < out.h; ++y) {
        for (int x = 0; x < out.w; ++x) {
            const Point p = map_point(inv, {static_cast<double>(x), static_cast<double>(y)});
            const long xi = std::lround(p.x);
            const long yi = std::lround(p.y);
            if (xi >= 0 && yi >= 0 && xi < mask.w && yi < mask.h) {
                dst.at(y, x) = mask.at(static_cast<int>(yi), static_cast<int>(xi));
            }
        }
    }
    return dst;
}

namespace detail {

inline void apply_brightness(Image& img, double delta) {
    for (auto& v : img.v) v = clamp01(v + static_cast<float>(delta));
}

inline void apply_contrast(Image& img, double mult) {
    for (auto& v : img.v) v = clamp01(0.5f + static_cast<float>(mult) * (v - 0.5f));
}

inline void apply_blur(Image& img, double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    if (radius < 1) return;
    std::vector<float> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
        kernel[i + radius] = static_cast<float>(w);
        sum += w;
    }
    for (auto& k : kernel) k = static_cast<float>(k / sum);

    // Separable pass, clamp-to-edge borders.
    Image tmp(img.h, img.w);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            float acc = 0.f;
            for (int i = -radius; i <= radius; ++i) {
                const int xx = std::clamp(x + i, 0, img.w - 1);
                acc += kernel[i + radius] * img.at(y, xx);
            }
            tmp.at(y, x) = acc;
        }
    }
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            float acc = 0.f;
            for (int i = -radius; i <= radius; ++i) {
                const int yy = std::clamp(y + i, 0, img.h - 1);
                acc += kernel[i + radius] * tmp.at(yy, x);
            }
            img.at(y, x) = clamp01(acc);
        }
    }
}

inline void apply_solarize(Image& img, double threshold) {
    for (auto& v : img.v) {
        if (v >= static_cast<float>(threshold)) v = 1.0f - v;
    }
}

inline void apply_photo_op(Image& img, const PhotoOp& op) {
    switch (op.kind) {
        case PhotoOpKind::Brightness: apply_brightness(img, op.param); break;
        case PhotoOpKind::Contrast: apply_contrast(img, op.param); break;
        case PhotoOpKind::Blur: apply_blur(img, op.param); break;
        case PhotoOpKind::Solarize: apply_solarize(img, op.param); break;
    }
}

}  // namespace detail

// Intensity-only effects; pixel correspondence (the AffineMap) is untouched.
inline std::pair<Image, AugmentRecord> apply_photometric(const Image& img,
                                                         const PhotoAugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    AugmentRecord rec;
    Image out = img;
    if (rng.bernoulli(cfg.p_brightness)) {
        rec.photo.push_back({PhotoOpKind::Brightness, rng.uniform(-cfg.brightness_max, cfg.brightness_max)});
    }
    if (rng.bernoulli(cfg.p_contrast)) {
        rec.photo.push_back({PhotoOpKind::Contrast, rng.uniform(cfg.contrast_lo, cfg.contrast_hi)});
    }
    if (rng.bernoulli(cfg.p_blur)) {
        rec.photo.push_back({PhotoOpKind::Blur, rng.uniform(cfg.blur_sigma_lo, cfg.blur_sigma_hi)});
    }
    if (rng.bernoulli(cfg.p_solarize)) {
        rec.photo.push_back({PhotoOpKind::Solarize, rng.uniform(cfg.solarize_lo, cfg.solarize_hi)});
    }
    for (const auto& op : rec.photo) detail::apply_photo_op(out, op);
    return {out, rec};
}

inline Image replay_photometric(const Image& img, const AugmentRecord& rec) {
    Image out = img;
    for (const auto& op : rec.photo) detail::apply_photo_op(out, op);
    return out;
}

}  // namespace dccl
