#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "dccl/augment.hpp"

namespace dccl {

enum class Scanner { A, B };

inline Scanner other_scanner(Scanner s) { return s == Scanner::A ? Scanner::B : Scanner::A; }

inline std::string scanner_name(Scanner s) { return s == Scanner::A ? "A" : "B"; }

inline Scanner scanner_from_name(const std::string& s) {
    if (s == "A") return Scanner::A;
    if (s == "B") return Scanner::B;
    throw InvalidSpec("unknown scanner id: " + s);
}

struct Ellipse {
    double cx = 0, cy = 0;   // center, pixel-center coordinates
    double ax = 1, ay = 1;   // semi-axes
    double angle = 0;        // radians, rotation of the major frame

    bool contains(double x, double y) const {
        const double dx = x - cx;
        const double dy = y - cy;
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        const double u = (c * dx + s * dy) / ax;
        const double v = (-s * dx + c * dy) / ay;
        return u * u + v * v <= 1.0;
    }

    // Half-extent of the axis-aligned bounding box.
    double extent_x() const {
        const double c = std::cos(angle), s = std::sin(angle);
        return std::sqrt(ax * ax * c * c + ay * ay * s * s);
    }
    double extent_y() const {
        const double c = std::cos(angle), s = std::sin(angle);
        return std::sqrt(ax * ax * s * s + ay * ay * c * c);
    }
};

// Full description of one synthetic chest phantom. Rendering is a pure
// function of the spec, so counterfactuals re-render the same anatomy with
// selected attributes swapped.
struct PhantomSpec {
    Size size{128, 128};
    Ellipse left_lung;
    Ellipse right_lung;
    double spine_x = 64, spine_w = 9;
    bool pe = false;          // pleural effusion present
    double pe_fill = 0.5;     // filled fraction of each lung's vertical extent
    Scanner scanner = Scanner::A;
    double noise_sigma = 0.02;
    std::uint64_t seed = 0;

    void validate() const {
        require(size.h >= 8 && size.w >= 8, "phantom.invalid_spec", "image too small");
        require(pe_fill >= 0.0 && pe_fill <= 1.0, "phantom.invalid_spec",
                "pe fill fraction must be in [0, 1]");
        if (!(left_lung.cx < right_lung.cx)) {
            throw InvalidSpec("left lung center must be strictly left of right lung center");
        }
        for (const Ellipse* e : {&left_lung, &right_lung}) {
            const double ex = e->extent_x(), ey = e->extent_y();
            if (e->cx - ex < 0 || e->cx + ex > size.w - 1 || e->cy - ey < 0 ||
                e->cy + ey > size.h - 1) {
                throw InvalidSpec("lung ellipse extends outside the image");
            }
        }
    }
};

// Fixed intensity palette of the anatomy layer (before the scanner transform).
namespace phantom_palette {
constexpr float kBody = 0.55f;
constexpr float kLung = 0.22f;
constexpr float kSpine = 0.82f;
constexpr float kPeFill = kBody;  // effusion renders lung tissue body-like
}  // namespace phantom_palette

struct ScannerProfile {
    double gamma;
    double contrast;
    double noise_scale;
};

inline ScannerProfile scanner_profile(Scanner s) {
    // Two fixed acquisition looks; they differ strictly for any intensity in (0,1).
    if (s == Scanner::A) return {0.90, 1.00, 1.0};
    return {1.30, 1.12, 1.5};
}

// Rasterizes the phantom. The label mask marks full lung ellipses regardless
// of effusion; the effusion fill only changes intensities, which is exactly
// the undersegmentation hazard this data is built to pose.
inline std::pair<Image, LabelMask> render_phantom(const PhantomSpec& spec) {
    spec.validate();
    const int h = spec.size.h, w = spec.size.w;

    Image img(h, w);
    LabelMask mask(h, w, 0);

    const ScannerProfile prof = scanner_profile(spec.scanner);
    Rng noise_rng(spec.seed);

    // Effusion cut lines: pixels strictly below are filled.
    const double cut_left = spec.left_lung.cy + spec.left_lung.extent_y() * (1.0 - 2.0 * spec.pe_fill);
    const double cut_right =
        spec.right_lung.cy + spec.right_lung.extent_y() * (1.0 - 2.0 * spec.pe_fill);

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double fx = x, fy = y;
            float v = phantom_palette::kBody;

            // Spine: bright column with a ~1px soft edge.
            const double dspine = std::abs(fx - spec.spine_x) - spec.spine_w * 0.5;
            if (dspine < 1.0) {
                const double t = std::clamp(1.0 - dspine, 0.0, 1.0);
                v = static_cast<float>(v + t * (phantom_palette::kSpine - v));
            }

            const bool in_left = spec.left_lung.contains(fx, fy);
            const bool in_right = spec.right_lung.contains(fx, fy);
            if (in_left && in_right) throw InvalidSpec("lung ellipses overlap");

            if (in_left || in_right) {
                v = phantom_palette::kLung;
                mask.at(y, x) = in_left ? 1 : 2;
                if (spec.pe) {
                    const double cut = in_left ? cut_left : cut_right;
                    if (fy > cut) v = phantom_palette::kPeFill;
                }
            }

            // Acquisition model: gamma, contrast about mid-gray, additive noise.
            double out = 0.5 + prof.contrast * (std::pow(static_cast<double>(v), prof.gamma) - 0.5);
            out += spec.noise_sigma * prof.noise_scale * noise_rng.normal();
            img.at(y, x) = clamp01(static_cast<float>(out));
        }
    }
    return {img, mask};
}

// Counterfactual re-render: same anatomy and noise realization, intervened
// attributes swapped in. At least one intervention must be requested.
inline std::pair<Image, LabelMask> counterfactual(const PhantomSpec& spec,
                                                  std::optional<Scanner> do_scanner,
                                                  std::optional<bool> do_pathology) {
    require(do_scanner.has_value() || do_pathology.has_value(), "phantom.empty_intervention",
            "counterfactual requires at least one intervention");
    PhantomSpec cf = spec;
    if (do_scanner) cf.scanner = *do_scanner;
    if (do_pathology) cf.pe = *do_pathology;
    return render_phantom(cf);
}

enum class CounterfactualTag { ScannerOnly, PathologyOnly, Both };

inline std::string tag_name(CounterfactualTag t) {
    switch (t) {
        case CounterfactualTag::ScannerOnly: return "scanner";
        case CounterfactualTag::PathologyOnly: return "pathology";
        case CounterfactualTag::Both: return "both";
    }
    return "?";
}

struct View {
    Image image;
    AffineMap map;  // anchor frame -> this view's frame
    AugmentRecord record;
    LabelMask mask;
    CounterfactualTag tag;
};

// Anchor view (augmented factual) plus counterfactual target views. The
// anchor's own augmentation is kept as the map back to the base render so
// samplers can reject pixels with no real content in any view.
struct ViewSet {
    Image anchor_image;
    LabelMask anchor_mask;
    AugmentRecord anchor_record;
    AffineMap anchor_to_base;
    Size base_size;
    std::vector<View> targets;
};

inline ViewSet build_view_set(const PhantomSpec& spec, const GeomAugmentConfig& geom_cfg,
                              const PhotoAugmentConfig& photo_cfg, Rng& rng) {
    geom_cfg.validate();
    photo_cfg.validate();
    const Size out = (geom_cfg.out.h == 0) ? spec.size : geom_cfg.out;

    const auto [base_img, base_mask] = render_phantom(spec);

    ViewSet vs;
    vs.base_size = spec.size;

    Rng anchor_rng = rng.fork(0);
    auto [ga, grec] = draw_geometric(geom_cfg, anchor_rng, spec.size);
    Image anchor_geom = apply_geometric(base_img, ga, out);
    auto [anchor_img, prec] = apply_photometric(anchor_geom, photo_cfg, anchor_rng);
    grec.photo = prec.photo;
    vs.anchor_image = std::move(anchor_img);
    vs.anchor_mask = transport_mask(base_mask, ga, out);
    vs.anchor_record = grec;
    vs.anchor_to_base = invert(ga);

    const CounterfactualTag tags[] = {CounterfactualTag::ScannerOnly,
                                      CounterfactualTag::PathologyOnly, CounterfactualTag::Both};
    for (int t = 0; t < 3; ++t) {
        const CounterfactualTag tag = tags[t];
        std::optional<Scanner> do_sc;
        std::optional<bool> do_pe;
        if (tag != CounterfactualTag::PathologyOnly) do_sc = other_scanner(spec.scanner);
        if (tag != CounterfactualTag::ScannerOnly) do_pe = !spec.pe;
        auto [cf_img, cf_mask] = counterfactual(spec, do_sc, do_pe);
        (void)cf_mask;  // identical to base_mask by construction

        Rng view_rng = rng.fork(static_cast<std::uint64_t>(t) + 1);
        auto [gt, rec] = draw_geometric(geom_cfg, view_rng, spec.size);
        Image v_geom = apply_geometric(cf_img, gt, out);
        auto [v_img, v_prec] = apply_photometric(v_geom, photo_cfg, view_rng);
        rec.photo = v_prec.photo;

        View view;
        view.map = compose(vs.anchor_to_base, gt);  // anchor -> base -> target
        view.image = std::move(v_img);
        view.record = rec;
        view.mask = transport_mask(vs.anchor_mask, view.map, out);
        view.tag = tag;
        vs.targets.push_back(std::move(view));
    }
    return vs;
}

// Random anatomy with ranges chosen so that specs are valid by construction:
// lungs stay disjoint, inside the frame, and left of / right of the midline.
inline PhantomSpec random_phantom_spec(Rng& rng, Size size, bool pe, Scanner scanner,
                                       double noise_sigma) {
    PhantomSpec s;
    s.size = size;
    const double W = size.w, H = size.h;
    s.left_lung.cx = rng.uniform(0.26, 0.33) * W;
    s.left_lung.cy = rng.uniform(0.42, 0.50) * H;
    s.left_lung.ax = rng.uniform(0.10, 0.145) * W;
    s.left_lung.ay = rng.uniform(0.18, 0.26) * H;
    s.left_lung.angle = rng.uniform(-0.12, 0.12);
    s.right_lung.cx = rng.uniform(0.67, 0.74) * W;
    s.right_lung.cy = rng.uniform(0.42, 0.50) * H;
    s.right_lung.ax = rng.uniform(0.10, 0.145) * W;
    s.right_lung.ay = rng.uniform(0.18, 0.26) * H;
    s.right_lung.angle = rng.uniform(-0.12, 0.12);
    s.spine_x = rng.uniform(0.47, 0.53) * W;
    s.spine_w = rng.uniform(0.05, 0.08) * W;
    s.pe = pe;
    s.pe_fill = rng.uniform(0.35, 0.65);
    s.scanner = scanner;
    s.noise_sigma = noise_sigma;
    s.seed = rng.next_u64();
    return s;
}

}  // namespace dccl
