#pragma once

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "dccl/array.hpp"
#include "dccl/errors.hpp"

namespace dccl {

// Homogeneous 2D affine transform, row-major 3x3 with last row (0,0,1).
// Coordinates are (x = column, y = row); the origin sits at the center of the
// top-left pixel. A view's map takes anchor-frame coordinates to view-frame
// coordinates.
struct AffineMap {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static AffineMap identity() { return {}; }

    static AffineMap translate(double tx, double ty) {
        return {{1, 0, tx, 0, 1, ty, 0, 0, 1}};
    }

    static AffineMap scale(double sx, double sy) {
        return {{sx, 0, 0, 0, sy, 0, 0, 0, 1}};
    }

    static AffineMap scale(double s) { return scale(s, s); }

    // Counter-clockwise rotation (in the x-right / y-down raster frame) about
    // the origin.
    static AffineMap rotate(double radians) {
        const double c = std::cos(radians);
        const double s = std::sin(radians);
        return {{c, -s, 0, s, c, 0, 0, 0, 1}};
    }

    static AffineMap rotate_about(double radians, double cx, double cy) {
        const double c = std::cos(radians);
        const double s = std::sin(radians);
        return {{c, -s, cx - c * cx + s * cy, s, c, cy - s * cx - c * cy, 0, 0, 1}};
    }

    // Rotation about the geometric center of an (h, w) pixel grid.
    static AffineMap rotate_about_center(double radians, Size size) {
        return rotate_about(radians, (size.w - 1) * 0.5, (size.h - 1) * 0.5);
    }

    double det2x2() const { return m[0] * m[4] - m[1] * m[3]; }

    bool invertible(double threshold = 1e-12) const {
        return std::abs(det2x2()) > threshold;
    }

    std::array<double, 9> rows() const { return m; }

    static AffineMap from_rows(std::span<const double> r) {
        require(r.size() == 9, "affine.bad_serialization", "expected 9 numbers");
        require(r[6] == 0.0 && r[7] == 0.0 && r[8] == 1.0, "affine.bad_serialization",
                "last row must be (0,0,1)");
        AffineMap a;
        for (int i = 0; i < 9; ++i) a.m[i] = r[i];
        return a;
    }

    bool operator==(const AffineMap&) const = default;
};

struct Point {
    double x = 0;
    double y = 0;
    bool operator==(const Point&) const = default;
};

// Applies b after a: (b . a)(p) = b(a(p)). Matrix product b*a.
inline AffineMap compose(const AffineMap& a, const AffineMap& b) {
    AffineMap r;
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 3; ++j) {
            double s = 0;
            for (int k = 0; k < 3; ++k) s += b.m[i * 3 + k] * a.m[k * 3 + j];
            r.m[i * 3 + j] = s;
        }
    }
    r.m[6] = 0;
    r.m[7] = 0;
    r.m[8] = 1;
    return r;
}

inline AffineMap invert(const AffineMap& a) {
    const double det = a.det2x2();
    if (std::abs(det) <= 1e-12) {
        throw SingularTransform("affine 2x2 determinant " + std::to_string(det) +
                                " below threshold 1e-12");
    }
    const double inv = 1.0 / det;
    AffineMap r;
    r.m[0] = a.m[4] * inv;
    r.m[1] = -a.m[1] * inv;
    r.m[3] = -a.m[3] * inv;
    r.m[4] = a.m[0] * inv;
    r.m[2] = -(r.m[0] * a.m[2] + r.m[1] * a.m[5]);
    r.m[5] = -(r.m[3] * a.m[2] + r.m[4] * a.m[5]);
    r.m[6] = 0;
    r.m[7] = 0;
    r.m[8] = 1;
    return r;
}

inline Point map_point(const AffineMap& a, Point p) {
    return {a.m[0] * p.x + a.m[1] * p.y + a.m[2],
            a.m[3] * p.x + a.m[4] * p.y + a.m[5]};
}

// Boolean mask over the anchor-frame integer grid marking pixels whose image
// under every map lies inside that view's bounds.
struct ValidRegion {
    int h = 0;
    int w = 0;
    std::vector<std::uint8_t> inside;

    ValidRegion() = default;
    ValidRegion(int h_, int w_) : h(h_), w(w_), inside(static_cast<std::size_t>(h_) * w_, 0) {}

    bool at(int y, int x) const { return inside[static_cast<std::size_t>(y) * w + x] != 0; }
    void set(int y, int x, bool b) { inside[static_cast<std::size_t>(y) * w + x] = b ? 1 : 0; }

    std::size_t count() const {
        std::size_t n = 0;
        for (auto b : inside) n += b;
        return n;
    }
    bool empty() const { return count() == 0; }

    // Anchor coordinates of all valid pixels, row-major order.
    std::vector<Point> points() const {
        std::vector<Point> out;
        out.reserve(count());
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (at(y, x)) out.push_back({static_cast<double>(x), static_cast<double>(y)});
        return out;
    }
};

// Continuous bounds test over the closed interval [0, size-1] per axis.
inline bool in_bounds(Point p, Size size) {
    return p.x >= 0.0 && p.x <= size.w - 1 && p.y >= 0.0 && p.y <= size.h - 1;
}

inline ValidRegion valid_intersection(std::span<const AffineMap> maps,
                                      std::span<const Size> sizes,
                                      Size anchor_size) {
    require(!maps.empty() && maps.size() == sizes.size(), "affine.bad_arguments",
            "valid_intersection needs equal-length non-empty lists");
    ValidRegion region(anchor_size.h, anchor_size.w);
    for (int y = 0; y < anchor_size.h; ++y) {
        for (int x = 0; x < anchor_size.w; ++x) {
            const Point p{static_cast<double>(x), static_cast<double>(y)};
            bool ok = true;
            for (std::size_t i = 0; i < maps.size(); ++i) {
                if (!in_bounds(map_point(maps[i], p), sizes[i])) {
                    ok = false;
                    break;
                }
            }
            region.set(y, x, ok);
        }
    }
    return region;
}

}  // namespace dccl
