#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "dccl/affine.hpp"
#include "dccl/rng.hpp"

using namespace dccl;

namespace {

Eigen::Matrix3d to_eigen(const AffineMap& a) {
    Eigen::Matrix3d m;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m(i, j) = a.m[i * 3 + j];
    return m;
}

AffineMap random_affine(Rng& rng) {
    const AffineMap r = AffineMap::rotate(rng.uniform(-3.0, 3.0));
    const AffineMap s = AffineMap::scale(rng.uniform(0.3, 2.5), rng.uniform(0.3, 2.5));
    const AffineMap t = AffineMap::translate(rng.uniform(-40, 40), rng.uniform(-40, 40));
    return compose(compose(r, s), t);
}

}  // namespace

TEST(Affine, ComposeIdentity) {
    const AffineMap id = AffineMap::identity();
    EXPECT_EQ(compose(id, id), id);
}

TEST(Affine, ComposeTranslations) {
    const AffineMap c = compose(AffineMap::translate(3, 0), AffineMap::translate(0, 4));
    const Point p = map_point(c, {0, 0});
    EXPECT_DOUBLE_EQ(p.x, 3.0);
    EXPECT_DOUBLE_EQ(p.y, 4.0);
}

// Independent oracle: the same product computed with Eigen.
TEST(Affine, ComposeMatchesMatrixProductOracle) {
    const AffineMap a = AffineMap::rotate_about_center(M_PI / 2.0, Size{64, 64});
    const AffineMap b = AffineMap::scale(2.0);
    const AffineMap c = compose(a, b);

    const Eigen::Matrix3d expected = to_eigen(b) * to_eigen(a);
    const Eigen::Vector3d q = expected * Eigen::Vector3d(10, 20, 1);
    const Point got = map_point(c, {10, 20});
    EXPECT_NEAR(got.x, q(0), 1e-12);
    EXPECT_NEAR(got.y, q(1), 1e-12);

    const Eigen::Matrix3d diff = to_eigen(c) - expected;
    EXPECT_LT(diff.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Affine, InvertIdentityAndTranslate) {
    EXPECT_EQ(invert(AffineMap::identity()), AffineMap::identity());
    const AffineMap inv = invert(AffineMap::translate(3, 4));
    EXPECT_DOUBLE_EQ(inv.m[2], -3.0);
    EXPECT_DOUBLE_EQ(inv.m[5], -4.0);
}

TEST(Affine, InvertRoundTrip) {
    const AffineMap a = compose(AffineMap::rotate(0.7), AffineMap::scale(1.5));
    const AffineMap round = compose(a, invert(a));
    const AffineMap id = AffineMap::identity();
    for (int i = 0; i < 9; ++i) EXPECT_NEAR(round.m[i], id.m[i], 1e-9);
}

TEST(Affine, InvertSingularThrows) {
    AffineMap a = AffineMap::scale(1e-13, 1.0);
    EXPECT_THROW(invert(a), SingularTransform);
}

TEST(Affine, MapPointBasics) {
    const Point p1 = map_point(AffineMap::identity(), {5.5, 7.25});
    EXPECT_DOUBLE_EQ(p1.x, 5.5);
    EXPECT_DOUBLE_EQ(p1.y, 7.25);

    const Point p2 = map_point(AffineMap::translate(1, 2), {0, 0});
    EXPECT_DOUBLE_EQ(p2.x, 1.0);
    EXPECT_DOUBLE_EQ(p2.y, 2.0);
}

// 90-degree rotation about the center of a 128x128 grid sends the top-left
// corner to the top-right corner; verified against direct matrix application.
TEST(Affine, MapPointRotate90Corner) {
    const AffineMap r = AffineMap::rotate_about_center(M_PI / 2.0, Size{128, 128});
    const Eigen::Vector3d q = to_eigen(r) * Eigen::Vector3d(0, 0, 1);
    const Point got = map_point(r, {0, 0});
    EXPECT_NEAR(got.x, q(0), 1e-12);
    EXPECT_NEAR(got.y, q(1), 1e-12);
    EXPECT_NEAR(got.x, 127.0, 1e-9);
    EXPECT_NEAR(got.y, 0.0, 1e-9);
}

TEST(Affine, ValidIntersectionIdentityIsFullGrid) {
    const AffineMap maps[] = {AffineMap::identity()};
    const Size sizes[] = {{16, 16}};
    const ValidRegion r = valid_intersection(maps, sizes, {16, 16});
    EXPECT_EQ(r.count(), 256u);
}

TEST(Affine, ValidIntersectionDisjointIsEmpty) {
    const AffineMap maps[] = {AffineMap::translate(16, 0)};
    const Size sizes[] = {{16, 16}};
    const ValidRegion r = valid_intersection(maps, sizes, {16, 16});
    EXPECT_TRUE(r.empty());
}

// Exhaustive per-pixel oracle with Eigen arithmetic.
TEST(Affine, ValidIntersectionMatchesExhaustiveOracle) {
    const Size size{64, 64};
    const AffineMap rot = AffineMap::rotate_about_center(M_PI / 4.0, size);
    const AffineMap maps[] = {rot};
    const Size sizes[] = {size};
    const ValidRegion r = valid_intersection(maps, sizes, size);

    const Eigen::Matrix3d m = to_eigen(rot);
    std::size_t inside = 0;
    for (int y = 0; y < size.h; ++y) {
        for (int x = 0; x < size.w; ++x) {
            const Eigen::Vector3d q = m * Eigen::Vector3d(x, y, 1);
            const bool ok = q(0) >= 0.0 && q(0) <= size.w - 1 && q(1) >= 0.0 && q(1) <= size.h - 1;
            EXPECT_EQ(r.at(y, x), ok) << "pixel (" << x << ", " << y << ")";
            inside += ok;
        }
    }
    EXPECT_EQ(r.count(), inside);
    EXPECT_GT(inside, 0u);
}

TEST(AffineProperty, CompositionAssociative) {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const AffineMap a = random_affine(rng);
        const AffineMap b = random_affine(rng);
        const AffineMap c = random_affine(rng);
        const AffineMap left = compose(compose(a, b), c);
        const AffineMap right = compose(a, compose(b, c));
        for (int i = 0; i < 9; ++i) {
            EXPECT_NEAR(left.m[i], right.m[i], 1e-12 * std::max(1.0, std::abs(left.m[i])));
        }
    }
}

TEST(AffineProperty, InverseRoundTripsPoints) {
    Rng rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        const AffineMap a = random_affine(rng);
        const AffineMap ainv = invert(a);
        const Point p{rng.uniform(-100, 100), rng.uniform(-100, 100)};
        const Point q = map_point(ainv, map_point(a, p));
        EXPECT_NEAR(q.x, p.x, 1e-9);
        EXPECT_NEAR(q.y, p.y, 1e-9);
    }
}

// Adding maps can only shrink the valid region.
TEST(AffineProperty, IntersectionMonotoneShrinking) {
    Rng rng(13);
    const Size size{32, 32};
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<AffineMap> maps{AffineMap::identity()};
        std::vector<Size> sizes{size};
        ValidRegion prev = valid_intersection(maps, sizes, size);
        EXPECT_EQ(prev.count(), static_cast<std::size_t>(size.h) * size.w);
        for (int extra = 0; extra < 3; ++extra) {
            maps.push_back(compose(AffineMap::rotate_about_center(rng.uniform(-0.6, 0.6), size),
                                   AffineMap::translate(rng.uniform(-6, 6), rng.uniform(-6, 6))));
            sizes.push_back(size);
            const ValidRegion next = valid_intersection(maps, sizes, size);
            for (int i = 0; i < size.h * size.w; ++i) {
                EXPECT_LE(next.inside[i], prev.inside[i]);
            }
            prev = next;
        }
    }
}

TEST(Affine, SerializationRoundTrip) {
    const AffineMap a = compose(AffineMap::rotate(0.3), AffineMap::translate(5, -2));
    const auto rows = a.rows();
    const AffineMap b = AffineMap::from_rows(rows);
    EXPECT_EQ(a, b);
    EXPECT_THROW(AffineMap::from_rows(std::vector<double>{1, 2, 3}), Error);
    auto bad = rows;
    bad[8] = 2.0;
    EXPECT_THROW(AffineMap::from_rows(bad), Error);
}
