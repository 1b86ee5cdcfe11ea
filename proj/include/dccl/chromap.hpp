#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "dccl/array.hpp"
#include "dccl/errors.hpp"
#include "dccl/rng.hpp"

namespace dccl {

// ---------------------------------------------------------------------------
// 2D projection of high-dimensional embeddings.
// ---------------------------------------------------------------------------

enum class ProjectionMethod { Pca, NeighborEmbed };

inline ProjectionMethod projection_from_name(const std::string& s) {
    if (s == "pca") return ProjectionMethod::Pca;
    if (s == "neighbor-embed") return ProjectionMethod::NeighborEmbed;
    throw ConfigError("config.bad_value", "unknown projection method: " + s);
}

struct Projection2d {
    Mat<double> points;     // N x 2
    bool degenerate = false;  // input had rank < 2; second axis padded with zeros
};

namespace chromap_detail {

// Cyclic Jacobi eigensolver for small symmetric matrices. Returns
// eigenvalues (descending) and matching eigenvectors as rows of `vecs`.
inline void symmetric_eigen(Mat<double> a, std::vector<double>& values, Mat<double>& vecs) {
    const int n = a.rows;
    vecs = Mat<double>(n, n);
    for (int i = 0; i < n; ++i) vecs.at(i, i) = 1.0;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
        if (off < 1e-24) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a.at(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int i = 0; i < n; ++i) {
                    const double aip = a.at(i, p), aiq = a.at(i, q);
                    a.at(i, p) = c * aip - s * aiq;
                    a.at(i, q) = s * aip + c * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    const double api = a.at(p, i), aqi = a.at(q, i);
                    a.at(p, i) = c * api - s * aqi;
                    a.at(q, i) = s * api + c * aqi;
                }
                for (int i = 0; i < n; ++i) {
                    const double vip = vecs.at(p, i), viq = vecs.at(q, i);
                    vecs.at(p, i) = c * vip - s * viq;
                    vecs.at(q, i) = s * vip + c * viq;
                }
            }
        }
    }
    values.resize(n);
    for (int i = 0; i < n; ++i) values[i] = a.at(i, i);

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int l, int r) { return values[l] > values[r]; });
    std::vector<double> sv(n);
    Mat<double> svec(n, n);
    for (int i = 0; i < n; ++i) {
        sv[i] = values[order[i]];
        std::copy(vecs.row(order[i]), vecs.row(order[i]) + n, svec.row(i));
    }
    values = std::move(sv);
    vecs = std::move(svec);
}

// Flip an axis so its largest-magnitude loading is positive.
inline void canonicalize_sign(double* v, int n) {
    int arg = 0;
    for (int i = 1; i < n; ++i)
        if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
    if (v[arg] < 0) {
        for (int i = 0; i < n; ++i) v[i] = -v[i];
    }
}

}  // namespace chromap_detail

// Top-2 principal components with sign-canonicalized axes. Rank < 2 data is
// flagged and padded with a zero second axis.
inline Projection2d pca_project(const Mat<double>& x) {
    require(x.rows >= 3 && x.cols >= 2, "chromap.bad_arguments", "need N >= 3 points with D >= 2");
    const int n = x.rows, d = x.cols;
    std::vector<double> mean(d, 0.0);
    for (int i = 0; i < n; ++i) {
        const double* r = x.row(i);
        for (int j = 0; j < d; ++j) mean[j] += r[j];
    }
    for (auto& m : mean) m /= n;

    Mat<double> cov(d, d);
    for (int i = 0; i < n; ++i) {
        const double* r = x.row(i);
        for (int a = 0; a < d; ++a) {
            const double da = r[a] - mean[a];
            for (int b = a; b < d; ++b) cov.at(a, b) += da * (r[b] - mean[b]);
        }
    }
    for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b) {
            cov.at(a, b) /= n;
            cov.at(b, a) = cov.at(a, b);
        }

    std::vector<double> values;
    Mat<double> vecs;
    chromap_detail::symmetric_eigen(cov, values, vecs);

    Projection2d out;
    out.points = Mat<double>(n, 2);
    const double rank_tol = std::max(1e-18, 1e-12 * std::max(values[0], 0.0));
    const bool axis1_ok = values[0] > 1e-18;
    const bool axis2_ok = values[1] > rank_tol;
    out.degenerate = !(axis1_ok && axis2_ok);

    chromap_detail::canonicalize_sign(vecs.row(0), d);
    chromap_detail::canonicalize_sign(vecs.row(1), d);
    for (int i = 0; i < n; ++i) {
        const double* r = x.row(i);
        for (int axis = 0; axis < 2; ++axis) {
            const bool ok = axis == 0 ? axis1_ok : axis2_ok;
            if (!ok) {
                out.points.at(i, axis) = 0.0;
                continue;
            }
            double s = 0.0;
            for (int j = 0; j < d; ++j) s += (r[j] - mean[j]) * vecs.at(axis, j);
            out.points.at(i, axis) = s;
        }
    }
    return out;
}

// Lightweight seeded neighbor-graph layout (attract k nearest neighbors,
// repulse random negatives). A deterministic stand-in for heavier neighbor
// embeddings; PCA remains the default projector.
inline Projection2d neighbor_embed_project(const Mat<double>& x, std::uint64_t seed,
                                           int n_neighbors = 10, int iterations = 200) {
    require(x.rows >= 3 && x.cols >= 2, "chromap.bad_arguments", "need N >= 3 points with D >= 2");
    const int n = x.rows;
    const int k = std::min(n_neighbors, n - 1);

    std::vector<std::vector<int>> nbrs(n);
    {
        std::vector<std::pair<double, int>> dist(n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                double s = 0.0;
                for (int c = 0; c < x.cols; ++c) {
                    const double diff = x.at(i, c) - x.at(j, c);
                    s += diff * diff;
                }
                dist[j] = {s, j};
            }
            dist[i].first = std::numeric_limits<double>::max();
            std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
            for (int j = 0; j < k; ++j) nbrs[i].push_back(dist[j].second);
        }
    }

    Rng rng(seed);
    Projection2d out;
    out.points = Mat<double>(n, 2);
    // init from PCA so the layout is a refinement, not a reshuffle
    Projection2d init = pca_project(x);
    out.points = init.points;
    out.degenerate = init.degenerate;

    for (int it = 0; it < iterations; ++it) {
        const double lr = 0.1 * (1.0 - static_cast<double>(it) / iterations);
        for (int i = 0; i < n; ++i) {
            double gx = 0.0, gy = 0.0;
            for (int j : nbrs[i]) {
                gx += out.points.at(j, 0) - out.points.at(i, 0);
                gy += out.points.at(j, 1) - out.points.at(i, 1);
            }
            const int neg = static_cast<int>(rng.uniform_index(n));
            const double rx = out.points.at(i, 0) - out.points.at(neg, 0);
            const double ry = out.points.at(i, 1) - out.points.at(neg, 1);
            const double rs = rx * rx + ry * ry + 1e-3;
            gx += rx / rs;
            gy += ry / rs;
            out.points.at(i, 0) += lr * gx / (k + 1);
            out.points.at(i, 1) += lr * gy / (k + 1);
        }
    }
    return out;
}

inline Projection2d project_2d(const Mat<double>& x, ProjectionMethod method, std::uint64_t seed) {
    if (method == ProjectionMethod::Pca) return pca_project(x);
    return neighbor_embed_project(x, seed);
}

// ---------------------------------------------------------------------------
// Minimum-volume enclosing ellipse: {x : (x-c)^T E (x-c) <= 1}.
// ---------------------------------------------------------------------------

struct Ellipse2D {
    double cx = 0, cy = 0;
    double e00 = 1, e01 = 0, e11 = 1;  // symmetric positive-definite shape matrix

    double value(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        return e00 * dx * dx + 2.0 * e01 * dx * dy + e11 * dy * dy;
    }
};

// Khachiyan's barycentric ascent with away steps; stops once every point sits
// within (1 + tol) and the active support touches the boundary, which keeps
// both containment and near-minimality certified.
inline Ellipse2D mvee(const Mat<double>& pts, double tol = 1e-6, int max_iter = 1000) {
    require(pts.cols == 2, "chromap.bad_arguments", "mvee expects N x 2 points");
    const int n = pts.rows;
    require(n >= 3, "chromap.bad_arguments", "mvee needs at least 3 points");

    std::vector<double> u(n, 1.0 / n);
    auto solve_m = [&](std::vector<double>& m_out) -> bool {
        // X = sum u_j q_j q_j^T with q = (x, y, 1); M_j = q_j^T X^{-1} q_j
        double X[6] = {0, 0, 0, 0, 0, 0};  // xx, xy, x1, yy, y1, 11
        for (int j = 0; j < n; ++j) {
            const double x = pts.at(j, 0), y = pts.at(j, 1), w = u[j];
            X[0] += w * x * x;
            X[1] += w * x * y;
            X[2] += w * x;
            X[3] += w * y * y;
            X[4] += w * y;
            X[5] += w;
        }
        const double a = X[0], b = X[1], c = X[2], d = X[3], e = X[4], f = X[5];
        const double det = a * (d * f - e * e) - b * (b * f - e * c) + c * (b * e - d * c);
        if (std::abs(det) < 1e-14) return false;
        const double i00 = (d * f - e * e) / det;
        const double i01 = (c * e - b * f) / det;
        const double i02 = (b * e - d * c) / det;
        const double i11 = (a * f - c * c) / det;
        const double i12 = (b * c - a * e) / det;
        const double i22 = (a * d - b * b) / det;
        m_out.resize(n);
        for (int j = 0; j < n; ++j) {
            const double x = pts.at(j, 0), y = pts.at(j, 1);
            m_out[j] = i00 * x * x + 2 * i01 * x * y + 2 * i02 * x + i11 * y * y + 2 * i12 * y + i22;
        }
        return true;
    };

    std::vector<double> m;
    if (!solve_m(m)) throw CollinearPoints("mvee: points are collinear");

    const double dlift = 3.0;  // lifted dimension d+1
    for (int iter = 0; iter < max_iter; ++iter) {
        int jmax = 0, jmin = -1;
        double mmax = -1.0, mmin = std::numeric_limits<double>::max();
        for (int j = 0; j < n; ++j) {
            if (m[j] > mmax) {
                mmax = m[j];
                jmax = j;
            }
            if (u[j] > 1e-12 && m[j] < mmin) {
                mmin = m[j];
                jmin = j;
            }
        }
        const double eps_up = mmax / dlift - 1.0;
        const double eps_dn = 1.0 - mmin / dlift;
        if (eps_up <= tol * 0.5 && eps_dn <= std::sqrt(tol)) break;

        if (eps_up >= eps_dn) {
            const double step = (mmax - dlift) / (dlift * (mmax - 1.0));
            for (auto& w : u) w *= (1.0 - step);
            u[jmax] += step;
        } else {
            // away step from the weakest active point
            double step = (mmin - dlift) / (dlift * (mmin - 1.0));
            step = std::max(step, -u[jmin] / (1.0 - u[jmin]));
            for (auto& w : u) w *= (1.0 - step);
            u[jmin] += step;
        }
        if (!solve_m(m)) throw CollinearPoints("mvee: degenerate weight iterate");
    }

    Ellipse2D el;
    double sx = 0, sy = 0;
    for (int j = 0; j < n; ++j) {
        sx += u[j] * pts.at(j, 0);
        sy += u[j] * pts.at(j, 1);
    }
    el.cx = sx;
    el.cy = sy;
    double f00 = 0, f01 = 0, f11 = 0;
    for (int j = 0; j < n; ++j) {
        const double dx = pts.at(j, 0) - el.cx;
        const double dy = pts.at(j, 1) - el.cy;
        f00 += u[j] * dx * dx;
        f01 += u[j] * dx * dy;
        f11 += u[j] * dy * dy;
    }
    // E = (F)^{-1} / 2 for the planar ellipse
    const double det = f00 * f11 - f01 * f01;
    if (std::abs(det) < 1e-20) throw CollinearPoints("mvee: rank-deficient spread");
    el.e00 = f11 / det / 2.0;
    el.e01 = -f01 / det / 2.0;
    el.e11 = f00 / det / 2.0;
    return el;
}

// Symmetric positive-definite square root of the 2x2 shape matrix.
inline void ellipse_sqrt(const Ellipse2D& el, double& s00, double& s01, double& s11) {
    const double tr = el.e00 + el.e11;
    const double det = el.e00 * el.e11 - el.e01 * el.e01;
    const double disc = std::sqrt(std::max(0.0, tr * tr - 4.0 * det));
    const double l0 = (tr + disc) / 2.0;
    const double l1 = (tr - disc) / 2.0;
    require(l1 > 0.0, "chromap.bad_ellipse", "shape matrix not positive definite");
    const double sl0 = std::sqrt(l0), sl1 = std::sqrt(l1);
    // s = sqrt via the identity sqrt(E) = (E + sqrt(det) I) / sqrt(tr + 2 sqrt(det))
    const double sdet = sl0 * sl1;
    const double denom = std::sqrt(l0 + l1 + 2.0 * sdet);
    s00 = (el.e00 + sdet) / denom;
    s01 = el.e01 / denom;
    s11 = (el.e11 + sdet) / denom;
}

// Maps ellipse to unit circle: y = E^{1/2} (x - c). All outputs land in the
// unit disc up to the mvee tolerance.
inline Mat<double> normalize_to_circle(const Mat<double>& pts, const Ellipse2D& el) {
    double s00, s01, s11;
    ellipse_sqrt(el, s00, s01, s11);
    Mat<double> out(pts.rows, 2);
    for (int i = 0; i < pts.rows; ++i) {
        const double dx = pts.at(i, 0) - el.cx;
        const double dy = pts.at(i, 1) - el.cy;
        out.at(i, 0) = s00 * dx + s01 * dy;
        out.at(i, 1) = s01 * dx + s11 * dy;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Polar coloring and image overlay.
// ---------------------------------------------------------------------------

struct ChroColor {
    double h = 0;  // hue in [0, 1)
    double s = 1;
    double v = 0;  // radius, capped at 1
};

inline ChroColor colorize_point(double x, double y) {
    ChroColor c;
    const double r = std::hypot(x, y);
    double theta = std::atan2(y, x);
    if (theta < 0) theta += 2.0 * M_PI;
    c.h = theta / (2.0 * M_PI);
    if (c.h >= 1.0) c.h = 0.0;
    c.s = 1.0;
    c.v = std::min(r, 1.0);
    return c;
}

inline std::vector<ChroColor> colorize(const Mat<double>& normalized) {
    std::vector<ChroColor> out(normalized.rows);
    for (int i = 0; i < normalized.rows; ++i) {
        out[i] = colorize_point(normalized.at(i, 0), normalized.at(i, 1));
    }
    return out;
}

inline void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    const double hh = h * 6.0;
    const int sector = std::min(5, static_cast<int>(hh));
    const double f = hh - sector;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    switch (sector) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

// H x W x 3 float RGB in [0, 1].
struct RgbImage {
    int h = 0, w = 0;
    std::vector<float> v;

    RgbImage() = default;
    RgbImage(int h_, int w_) : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_ * 3, 0.f) {}

    float* px(int y, int x) { return v.data() + (static_cast<std::size_t>(y) * w + x) * 3; }
    const float* px(int y, int x) const { return v.data() + (static_cast<std::size_t>(y) * w + x) * 3; }
};

// out = (1 - alpha) * grayscale + alpha * color, per pixel.
inline RgbImage render_overlay(const Image& img, const std::vector<ChroColor>& colors,
                               double alpha = 0.6) {
    require(static_cast<std::size_t>(img.h) * img.w == colors.size(), "chromap.bad_arguments",
            "one color per pixel required");
    RgbImage out(img.h, img.w);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * img.w + x;
            double r, g, b;
            hsv_to_rgb(colors[i].h, colors[i].s, colors[i].v, r, g, b);
            const double gray = img.at(y, x);
            float* p = out.px(y, x);
            p[0] = static_cast<float>((1.0 - alpha) * gray + alpha * r);
            p[1] = static_cast<float>((1.0 - alpha) * gray + alpha * g);
            p[2] = static_cast<float>((1.0 - alpha) * gray + alpha * b);
        }
    }
    return out;
}

struct ChromapOptions {
    ProjectionMethod method = ProjectionMethod::Pca;
    double alpha = 0.6;
    double mvee_tol = 1e-6;
    std::uint64_t seed = 0;
};

struct ChromapResult {
    RgbImage overlay;
    Ellipse2D ellipse;
    bool degenerate_projection = false;
};

// Full CHRO-map pipeline for one image: project per-pixel embeddings to 2D,
// normalize by the minimum-volume enclosing ellipse, color by polar
// coordinates, and blend over the grayscale input.
template <typename T>
ChromapResult chromap_render(const EmbeddingField<T>& field, const Image& img,
                             const ChromapOptions& opts = {}) {
    require(field.h == img.h && field.w == img.w, "chromap.bad_arguments",
            "field and image sizes differ");
    const int n = field.h * field.w;
    Mat<double> x(n, field.d);
    for (int i = 0; i < n; ++i) {
        for (int d = 0; d < field.d; ++d) {
            x.at(i, d) = static_cast<double>(field.v[static_cast<std::size_t>(i) * field.d + d]);
        }
    }
    const Projection2d proj = project_2d(x, opts.method, opts.seed);
    ChromapResult res;
    res.degenerate_projection = proj.degenerate;
    res.ellipse = mvee(proj.points, opts.mvee_tol);
    const Mat<double> normalized = normalize_to_circle(proj.points, res.ellipse);
    res.overlay = render_overlay(img, colorize(normalized), opts.alpha);
    return res;
}

}  // namespace dccl
