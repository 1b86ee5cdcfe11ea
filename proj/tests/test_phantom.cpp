#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "dccl/phantom.hpp"

using namespace dccl;

namespace {

PhantomSpec basic_spec() {
    PhantomSpec s;
    s.size = {64, 64};
    s.left_lung = {19, 30, 8, 13, 0.05};
    s.right_lung = {45, 30, 8, 13, -0.05};
    s.spine_x = 32;
    s.spine_w = 4;
    s.pe = false;
    s.pe_fill = 0.5;
    s.scanner = Scanner::A;
    s.noise_sigma = 0.02;
    s.seed = 42;
    return s;
}

GeomAugmentConfig no_geom(Size size) {
    GeomAugmentConfig g;
    g.out = size;
    return g;
}

}  // namespace

// Per-pixel point-in-ellipse oracle for the rasterized label counts.
TEST(Phantom, LabelCountsMatchEllipseOracle) {
    const PhantomSpec spec = basic_spec();
    const auto [img, mask] = render_phantom(spec);

    long left_oracle = 0, right_oracle = 0, left_mask = 0, right_mask = 0;
    for (int y = 0; y < spec.size.h; ++y) {
        for (int x = 0; x < spec.size.w; ++x) {
            // independent containment test
            const auto inside = [&](const Ellipse& e) {
                const double c = std::cos(e.angle), s = std::sin(e.angle);
                const double dx = x - e.cx, dy = y - e.cy;
                const double u = (c * dx + s * dy) / e.ax;
                const double v = (-s * dx + c * dy) / e.ay;
                return u * u + v * v <= 1.0;
            };
            left_oracle += inside(spec.left_lung);
            right_oracle += inside(spec.right_lung);
            left_mask += mask.at(y, x) == 1;
            right_mask += mask.at(y, x) == 2;
        }
    }
    EXPECT_EQ(left_mask, left_oracle);
    EXPECT_EQ(right_mask, right_oracle);
    EXPECT_GT(left_mask, 0);
}

TEST(Phantom, PeWithZeroFillIsNullIntervention) {
    PhantomSpec healthy = basic_spec();
    PhantomSpec pe0 = healthy;
    pe0.pe = true;
    pe0.pe_fill = 0.0;
    const auto [img_a, mask_a] = render_phantom(healthy);
    const auto [img_b, mask_b] = render_phantom(pe0);
    EXPECT_EQ(img_a, img_b);
    EXPECT_EQ(mask_a, mask_b);
}

TEST(Phantom, RenderIsDeterministic) {
    const PhantomSpec spec = basic_spec();
    const auto [a_img, a_mask] = render_phantom(spec);
    const auto [b_img, b_mask] = render_phantom(spec);
    EXPECT_EQ(a_img, b_img);
    EXPECT_EQ(a_mask, b_mask);
}

TEST(Phantom, InvalidSpecsThrow) {
    PhantomSpec overlap = basic_spec();
    overlap.right_lung.cx = 24;  // collides with the left ellipse
    EXPECT_THROW(render_phantom(overlap), InvalidSpec);

    PhantomSpec outside = basic_spec();
    outside.left_lung.cy = 2;
    EXPECT_THROW(render_phantom(outside), InvalidSpec);

    PhantomSpec swapped = basic_spec();
    std::swap(swapped.left_lung, swapped.right_lung);
    EXPECT_THROW(render_phantom(swapped), InvalidSpec);
}

TEST(Counterfactual, EmptyInterventionThrows) {
    EXPECT_THROW(counterfactual(basic_spec(), std::nullopt, std::nullopt), Error);
}

TEST(Counterfactual, ScannerChangeKeepsMaskAndMovesIntensities) {
    const PhantomSpec spec = basic_spec();
    const auto [img, mask] = render_phantom(spec);
    const auto [cf_img, cf_mask] = counterfactual(spec, other_scanner(spec.scanner), std::nullopt);

    EXPECT_EQ(mask, cf_mask);  // geometry untouched

    std::size_t changed = 0;
    for (std::size_t i = 0; i < img.v.size(); ++i) changed += img.v[i] != cf_img.v[i];
    EXPECT_GE(changed, img.v.size() * 999 / 1000);

    // per-class mean intensity shifts
    for (int cls = 0; cls < 3; ++cls) {
        double m0 = 0, m1 = 0;
        long n = 0;
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x)
                if (mask.at(y, x) == cls) {
                    m0 += img.at(y, x);
                    m1 += cf_img.at(y, x);
                    ++n;
                }
        ASSERT_GT(n, 0);
        EXPECT_GT(std::abs(m0 / n - m1 / n), 1e-3);
    }
}

// Pathology difference support must stay inside the lower lung portions
// (recomputed independently here).
TEST(Counterfactual, PathologyDiffSupportMatchesOracle) {
    PhantomSpec spec = basic_spec();
    spec.pe = false;
    spec.pe_fill = 0.5;
    const auto [img, mask] = render_phantom(spec);
    const auto [cf_img, cf_mask] = counterfactual(spec, std::nullopt, true);
    EXPECT_EQ(mask, cf_mask);

    const auto lower_portion = [&](const Ellipse& e, double x, double y) {
        const double c = std::cos(e.angle), s = std::sin(e.angle);
        const double dx = x - e.cx, dy = y - e.cy;
        const double u = (c * dx + s * dy) / e.ax;
        const double v = (-s * dx + c * dy) / e.ay;
        if (u * u + v * v > 1.0) return false;
        const double ey = std::sqrt(e.ax * e.ax * s * s + e.ay * e.ay * c * c);
        return y > e.cy + ey * (1.0 - 2.0 * spec.pe_fill);
    };

    std::size_t diff_count = 0;
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            const bool differs = img.at(y, x) != cf_img.at(y, x);
            diff_count += differs;
            if (differs) {
                EXPECT_TRUE(lower_portion(spec.left_lung, x, y) ||
                            lower_portion(spec.right_lung, x, y))
                    << "diff outside lower lung at (" << x << ", " << y << ")";
            }
        }
    }
    EXPECT_GT(diff_count, 0u);
}

TEST(ViewSet, DisabledAugmentationKeepsFactualAnchor) {
    const PhantomSpec spec = basic_spec();
    const auto [img, mask] = render_phantom(spec);
    Rng rng(5);
    const ViewSet vs = build_view_set(spec, no_geom(spec.size), PhotoAugmentConfig{}, rng);
    EXPECT_EQ(vs.anchor_image, img);
    EXPECT_EQ(vs.anchor_mask, mask);
}

TEST(ViewSet, HasThreeCounterfactualTargetsWithExpectedTags) {
    Rng rng(6);
    const ViewSet vs = build_view_set(basic_spec(), no_geom({64, 64}), PhotoAugmentConfig{}, rng);
    ASSERT_EQ(vs.targets.size(), 3u);
    EXPECT_EQ(vs.targets[0].tag, CounterfactualTag::ScannerOnly);
    EXPECT_EQ(vs.targets[1].tag, CounterfactualTag::PathologyOnly);
    EXPECT_EQ(vs.targets[2].tag, CounterfactualTag::Both);
}

// Transported-mask equality oracle over random specs: every target mask must
// equal the anchor mask resampled through its AffineMap, recomputed here with
// independent arithmetic.
TEST(ViewSet, MaskConsistencyOracleOnRandomSpecs) {
    Rng rng(123);
    GeomAugmentConfig g;
    g.rotation_max_deg = 20.0;
    g.crop_scale_lo = 0.6;
    g.crop_scale_hi = 1.0;
    PhotoAugmentConfig p;
    p.p_brightness = 0.5;
    p.brightness_max = 0.2;

    for (int trial = 0; trial < 100; ++trial) {
        const bool pe = rng.bernoulli(0.5);
        const Scanner sc = rng.bernoulli(0.5) ? Scanner::A : Scanner::B;
        const PhantomSpec spec = random_phantom_spec(rng, {32, 32}, pe, sc, 0.02);
        Rng vs_rng(rng.next_u64());
        const ViewSet vs = build_view_set(spec, g, p, vs_rng);

        for (const View& view : vs.targets) {
            Eigen::Matrix3d m;
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) m(i, j) = view.map.m[i * 3 + j];
            const Eigen::Matrix3d inv = m.inverse();
            for (int y = 0; y < view.mask.h; ++y) {
                for (int x = 0; x < view.mask.w; ++x) {
                    const Eigen::Vector3d src = inv * Eigen::Vector3d(x, y, 1);
                    const long sx = std::lround(src(0));
                    const long sy = std::lround(src(1));
                    std::uint8_t expect = 0;
                    if (sx >= 0 && sy >= 0 && sx < vs.anchor_mask.w && sy < vs.anchor_mask.h) {
                        expect = vs.anchor_mask.at(static_cast<int>(sy), static_cast<int>(sx));
                    }
                    ASSERT_EQ(view.mask.at(y, x), expect)
                        << "trial " << trial << " pixel (" << x << ", " << y << ")";
                }
            }
        }
    }
}

TEST(Phantom, RandomSpecsAreValidByConstruction) {
    Rng rng(31337);
    for (int i = 0; i < 200; ++i) {
        const PhantomSpec s =
            random_phantom_spec(rng, {48, 48}, rng.bernoulli(0.5), Scanner::A, 0.02);
        EXPECT_NO_THROW(s.validate());
        EXPECT_NO_THROW(render_phantom(s));
    }
}
