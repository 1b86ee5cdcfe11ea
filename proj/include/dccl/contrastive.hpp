#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "dccl/affine.hpp"
#include "dccl/array.hpp"
#include "dccl/errors.hpp"
#include "dccl/phantom.hpp"
#include "dccl/rng.hpp"

namespace dccl {

enum class LossMethod { Dvd, Mvd, Sdvd, Smvd };

inline std::string loss_method_name(LossMethod m) {
    switch (m) {
        case LossMethod::Dvd: return "dvd";
        case LossMethod::Mvd: return "mvd";
        case LossMethod::Sdvd: return "sdvd";
        case LossMethod::Smvd: return "smvd";
    }
    return "?";
}

inline LossMethod loss_method_from_name(const std::string& s) {
    if (s == "dvd") return LossMethod::Dvd;
    if (s == "mvd") return LossMethod::Mvd;
    if (s == "sdvd") return LossMethod::Sdvd;
    if (s == "smvd") return LossMethod::Smvd;
    throw ConfigError("config.bad_value", "unknown loss method: " + s);
}

inline bool loss_is_supervised(LossMethod m) {
    return m == LossMethod::Sdvd || m == LossMethod::Smvd;
}

struct LossConfig {
    double tau = 0.1;
    int k = 1000;
    bool foreground_anchors_only = true;  // anchor policy of the supervised variants

    void validate() const {
        require(tau > 0.0, "loss.bad_config", "temperature must be positive");
        require(k >= 2, "loss.bad_config", "need at least 2 samples per view");
    }
};

// ---------------------------------------------------------------------------
// Pixel sampling over the valid intersection of active views.
// ---------------------------------------------------------------------------

// K anchor-frame coordinates with, per view, the resolved integer pixel index
// rounded from the exact affine image. View 0 is the anchor itself.
struct PixelBatch {
    std::vector<Point> coords;                 // anchor-frame integer positions
    std::vector<std::vector<int>> view_index;  // per view: row*W + col, K entries
    std::vector<Size> view_sizes;
    std::vector<std::uint8_t> labels;          // empty when unlabeled
    bool with_replacement = false;

    int k() const { return static_cast<int>(coords.size()); }
    int views() const { return static_cast<int>(view_index.size()); }
    bool has_labels() const { return !labels.empty(); }
};

// Draws K pixels uniformly from the intersection of the anchor's base-content
// region and every active target's bounds. Without replacement when the
// region is large enough, with replacement (flagged) otherwise.
inline PixelBatch sample_pixels(const ViewSet& vs, const std::vector<int>& active_targets, int K,
                                Rng& rng, bool want_labels) {
    require(K >= 1, "sampler.bad_arguments", "K must be positive");
    std::vector<AffineMap> maps;
    std::vector<Size> sizes;
    maps.push_back(vs.anchor_to_base);
    sizes.push_back(vs.base_size);
    for (int t : active_targets) {
        maps.push_back(vs.targets.at(t).map);
        sizes.push_back(vs.targets.at(t).image.size());
    }
    const Size anchor_size = vs.anchor_image.size();
    const ValidRegion region = valid_intersection(maps, sizes, anchor_size);
    if (region.empty()) {
        throw EmptyIntersection("no anchor pixel is valid in all active views");
    }

    std::vector<Point> pool = region.points();
    PixelBatch batch;
    if (static_cast<int>(pool.size()) >= K) {
        // Partial Fisher-Yates: first K entries become the sample.
        for (int i = 0; i < K; ++i) {
            const std::size_t j = i + rng.uniform_index(pool.size() - i);
            std::swap(pool[i], pool[j]);
            batch.coords.push_back(pool[i]);
        }
    } else {
        batch.with_replacement = true;
        for (int i = 0; i < K; ++i) {
            batch.coords.push_back(pool[rng.uniform_index(pool.size())]);
        }
    }

    batch.view_index.resize(active_targets.size() + 1);
    batch.view_sizes.push_back(anchor_size);
    for (int t : active_targets) batch.view_sizes.push_back(vs.targets.at(t).image.size());

    for (const Point& p : batch.coords) {
        batch.view_index[0].push_back(static_cast<int>(p.y) * anchor_size.w + static_cast<int>(p.x));
        for (std::size_t vi = 0; vi < active_targets.size(); ++vi) {
            const Size sz = batch.view_sizes[vi + 1];
            const Point q = map_point(vs.targets.at(active_targets[vi]).map, p);
            const int col = static_cast<int>(std::lround(q.x));
            const int row = static_cast<int>(std::lround(q.y));
            batch.view_index[vi + 1].push_back(row * sz.w + col);
        }
    }

    if (want_labels) {
        for (const Point& p : batch.coords) {
            batch.labels.push_back(vs.anchor_mask.at(static_cast<int>(p.y), static_cast<int>(p.x)));
        }
    }
    return batch;
}

template <typename T>
Mat<T> gather_embeddings(const EmbeddingField<T>& field, const PixelBatch& batch, int view) {
    Mat<T> z(batch.k(), field.d);
    for (int i = 0; i < batch.k(); ++i) {
        const int idx = batch.view_index.at(view).at(i);
        const T* src = field.v.data() + static_cast<std::size_t>(idx) * field.d;
        std::copy(src, src + field.d, z.row(i));
    }
    return z;
}

// Accumulates (+=) sampled-pixel gradients back into an upstream field;
// repeated indices add up.
template <typename T>
void scatter_gradient(EmbeddingField<T>& dfield, const PixelBatch& batch, int view,
                      const Mat<T>& dz) {
    for (int i = 0; i < batch.k(); ++i) {
        const int idx = batch.view_index.at(view).at(i);
        T* dst = dfield.v.data() + static_cast<std::size_t>(idx) * dfield.d;
        const T* src = dz.row(i);
        for (int d = 0; d < dfield.d; ++d) dst[d] += src[d];
    }
}

// ---------------------------------------------------------------------------
// Loss core. All reductions run in double; gradients are returned in the
// caller's scalar type.
// ---------------------------------------------------------------------------

template <typename T>
struct LossResult {
    double value = 0.0;
    std::vector<Mat<T>> dz;  // one per view, empty when gradients not requested
};

namespace loss_detail {

template <typename T>
Mat<T> transpose(const Mat<T>& m) {
    Mat<T> t(m.cols, m.rows);
    for (int i = 0; i < m.rows; ++i) {
        const T* r = m.row(i);
        for (int j = 0; j < m.cols; ++j) t.at(j, i) = r[j];
    }
    return t;
}

// S = A * B^T * inv_tau, with B supplied pre-transposed (D x Kc) so the inner
// accumulation runs over contiguous rows.
template <typename T>
Mat<T> sim_block(const Mat<T>& a, const Mat<T>& bt, double inv_tau) {
    const int ka = a.rows, kc = bt.cols, d_n = a.cols;
    Mat<T> s(ka, kc);
    for (int i = 0; i < ka; ++i) {
        T* sr = s.row(i);
        const T* ar = a.row(i);
        for (int d = 0; d < d_n; ++d) {
            const T w = ar[d];
            const T* btr = bt.row(d);
            for (int j = 0; j < kc; ++j) sr[j] += w * btr[j];
        }
        const T it = static_cast<T>(inv_tau);
        for (int j = 0; j < kc; ++j) sr[j] *= it;
    }
    return s;
}

// Branch-free float exponential (Cody-Waite reduction, degree-5 polynomial,
// ~2 ulp) that the compiler can vectorize; the libm call defeats SIMD in the
// softmax inner loops. The double instantiation keeps std::exp.
inline float fast_expf(float x) {
    x = std::min(88.0f, std::max(-87.0f, x));
    const float z = x * 1.44269504088896341f;
    const float n = std::floor(z + 0.5f);
    float r = x - n * 0.693359375f;
    r -= n * -2.12194440e-4f;
    float p = 1.9875691500e-4f;
    p = p * r + 1.3981999507e-3f;
    p = p * r + 8.3334519073e-3f;
    p = p * r + 4.1665795894e-2f;
    p = p * r + 1.6666665459e-1f;
    p = p * r + 5.0000001201e-1f;
    p = p * r * r + r + 1.0f;
    const std::int32_t bits = (static_cast<std::int32_t>(n) + 127) << 23;
    float scale;
    std::memcpy(&scale, &bits, sizeof(scale));
    return p * scale;
}

template <typename T>
void exp_shift_inplace(T* x, int n, T shift) {
    if constexpr (std::is_same_v<T, float>) {
        for (int i = 0; i < n; ++i) x[i] = fast_expf(x[i] - shift);
    } else {
        for (int i = 0; i < n; ++i) x[i] = std::exp(x[i] - shift);
    }
}

template <typename T>
T row_max(const std::vector<Mat<T>*>& blocks, int row) {
    T m = blocks[0]->row(row)[0];
    for (const Mat<T>* b : blocks) {
        const T* r = b->row(row);
        for (int j = 0; j < b->cols; ++j) m = std::max(m, r[j]);
    }
    return m;
}

// Exponentiates a row across blocks in place and returns the softmax
// denominator (sum of shifted exponentials).
template <typename T>
double row_exp_pass(std::vector<Mat<T>*>& blocks, int row,
                                                           T mx) {
    double denom = 0.0;
    for (Mat<T>* b : blocks) {
        T* r = b->row(row);
        exp_shift_inplace(r, b->cols, mx);
        double acc = 0.0;
        for (int j = 0; j < b->cols; ++j) acc += static_cast<double>(r[j]);
        denom += acc;
    }
    return denom;
}

// dA += dS * B, dB += dS^T * A, with dS given blockwise; bt is B transposed.
// dbt accumulates the candidate gradient transposed (D x Kc).
template <typename T>
void block_grad(const Mat<T>& a, const Mat<T>& bt,
                                                       const Mat<T>& ds, double inv_tau, Mat<T>& da,
                                                       Mat<T>& dbt) {
    const int ka = a.rows, kc = bt.cols, d_n = a.cols;
    for (int i = 0; i < ka; ++i) {
        const T* dsr = ds.row(i);
        T* dar = da.row(i);
        for (int d = 0; d < d_n; ++d) {
            const T* btr = bt.row(d);
            T acc = T(0);
            for (int j = 0; j < kc; ++j) acc += dsr[j] * btr[j];
            dar[d] += acc * static_cast<T>(inv_tau);
        }
        const T* ar = a.row(i);
        for (int d = 0; d < d_n; ++d) {
            const T w = ar[d] * static_cast<T>(inv_tau);
            T* dbtr = dbt.row(d);
            for (int j = 0; j < kc; ++j) dbtr[j] += w * dsr[j];
        }
    }
}

template <typename T>
void add_transposed(Mat<T>& dst, const Mat<T>& src_t) {
    for (int d = 0; d < src_t.rows; ++d) {
        const T* r = src_t.row(d);
        for (int j = 0; j < src_t.cols; ++j) dst.at(j, d) += r[j];
    }
}

}  // namespace loss_detail

// Two-view NT-Xent over positionally paired rows: positives share the row
// index, candidates are the other view's K rows, both directions averaged and
// halved. Softmax uses max subtraction.
template <typename T>
LossResult<T> ntxent_pair(const Mat<T>& za, const Mat<T>& zb, double tau, bool want_grad = false) {
    require(za.rows == zb.rows && za.cols == zb.cols && za.rows >= 2, "loss.bad_arguments",
            "ntxent_pair needs matching K x D with K >= 2");
    const int K = za.rows;
    const int D = za.cols;
    const double inv_tau = 1.0 / tau;

    LossResult<T> res;
    Mat<T> dbt_a, dbt_b;
    if (want_grad) {
        res.dz.emplace_back(K, D);
        res.dz.emplace_back(K, D);
        dbt_a = Mat<T>(D, K);
        dbt_b = Mat<T>(D, K);
    }
    const Mat<T> zat = loss_detail::transpose(za);
    const Mat<T> zbt = loss_detail::transpose(zb);

    double total = 0.0;
    const double w = 1.0 / (2.0 * K);
    for (int dir = 0; dir < 2; ++dir) {
        const Mat<T>& a = dir == 0 ? za : zb;
        const Mat<T>& bt = dir == 0 ? zbt : zat;
        Mat<T> s = loss_detail::sim_block(a, bt, inv_tau);
        std::vector<Mat<T>*> bl{&s};
        for (int i = 0; i < K; ++i) {
            const T mx = loss_detail::row_max(bl, i);
            const double spos = static_cast<double>(s.at(i, i));
            const double denom = loss_detail::row_exp_pass(bl, i, mx);
            total += static_cast<double>(mx) + std::log(denom) - spos;
            if (want_grad) {
                T* sr = s.row(i);
                const T scale = static_cast<T>(w / denom);
                for (int j = 0; j < K; ++j) sr[j] *= scale;
                sr[i] -= static_cast<T>(w);
            }
        }
        if (want_grad) {
            loss_detail::block_grad(a, bt, s, inv_tau, res.dz[dir == 0 ? 0 : 1],
                                    dir == 0 ? dbt_b : dbt_a);
        }
    }
    if (want_grad) {
        loss_detail::add_transposed(res.dz[0], dbt_a);
        loss_detail::add_transposed(res.dz[1], dbt_b);
    }
    res.value = total * w;
    return res;
}

// DVD-CL: anchor view versus each target view, NT-Xent per pair, mean over
// target views.
template <typename T>
LossResult<T> loss_dvd(const std::vector<Mat<T>>& z, double tau, bool want_grad = false) {
    require(z.size() >= 2, "loss.bad_arguments", "DVD needs at least one target view");
    const int V = static_cast<int>(z.size());

    LossResult<T> res;
    if (want_grad) {
        for (const auto& m : z) res.dz.emplace_back(m.rows, m.cols);
    }
    const double w = 1.0 / (V - 1);
    for (int t = 1; t < V; ++t) {
        LossResult<T> pair = ntxent_pair(z[0], z[t], tau, want_grad);
        res.value += w * pair.value;
        if (want_grad) {
            for (int r = 0; r < z[0].rows; ++r) {
                for (int d = 0; d < z[0].cols; ++d) {
                    res.dz[0].at(r, d) += static_cast<T>(w) * pair.dz[0].at(r, d);
                    res.dz[t].at(r, d) += static_cast<T>(w) * pair.dz[1].at(r, d);
                }
            }
        }
    }
    return res;
}

// MVD-CL: all V*K sampled pixels pooled. For an anchor pixel (v, i) the
// candidates are every pixel of the other views; the V-1 pixels sharing the
// anchor coordinate are the positives (mean over positives outside the log).
// Same-view pixels stay out of the denominator so that V = 2 reduces exactly
// to DVD-CL.
template <typename T>
LossResult<T> loss_mvd(const std::vector<Mat<T>>& z, double tau, bool want_grad = false) {
    const int V = static_cast<int>(z.size());
    require(V >= 2, "loss.bad_arguments", "MVD needs at least two views");
    const int K = z[0].rows;
    const int D = z[0].cols;
    const double inv_tau = 1.0 / tau;

    LossResult<T> res;
    std::vector<Mat<T>> dzt;  // candidate-side gradients, transposed
    if (want_grad) {
        for (const auto& m : z) res.dz.emplace_back(m.rows, m.cols);
        for (int v = 0; v < V; ++v) dzt.emplace_back(D, K);
    }
    std::vector<Mat<T>> zt;
    zt.reserve(V);
    for (const auto& m : z) zt.push_back(loss_detail::transpose(m));

    const double anchor_w = 1.0 / (static_cast<double>(V) * K);
    const double pos_w = anchor_w / (V - 1);
    for (int v = 0; v < V; ++v) {
        std::vector<int> others;
        for (int u = 0; u < V; ++u)
            if (u != v) others.push_back(u);

        std::vector<Mat<T>> blocks;
        blocks.reserve(others.size());
        for (int u : others) blocks.push_back(loss_detail::sim_block(z[v], zt[u], inv_tau));
        std::vector<Mat<T>*> block_ptrs;
        for (auto& b : blocks) block_ptrs.push_back(&b);

        for (int i = 0; i < K; ++i) {
            const T mx = loss_detail::row_max(block_ptrs, i);
            double possum = 0.0;
            for (const auto& b : blocks) possum += static_cast<double>(b.at(i, i));
            const double denom = loss_detail::row_exp_pass(block_ptrs, i, mx);
            const double lse = static_cast<double>(mx) + std::log(denom);
            res.value += anchor_w * ((V - 1) * lse - possum) / (V - 1);

            if (want_grad) {
                const T scale = static_cast<T>(anchor_w / denom);
                for (auto& b : blocks) {
                    T* sr = b.row(i);
                    for (int j = 0; j < K; ++j) sr[j] *= scale;
                    sr[i] -= static_cast<T>(pos_w);
                }
            }
        }
        if (want_grad) {
            for (std::size_t b = 0; b < others.size(); ++b) {
                loss_detail::block_grad(z[v], zt[others[b]], blocks[b], inv_tau, res.dz[v],
                                        dzt[others[b]]);
            }
        }
    }
    if (want_grad) {
        for (int v = 0; v < V; ++v) loss_detail::add_transposed(res.dz[v], dzt[v]);
    }
    return res;
}

namespace loss_detail {

inline void check_labels(const std::vector<std::uint8_t>& labels, int k) {
    require(static_cast<int>(labels.size()) == k, "loss.labels_required",
            "supervised loss needs one label per sampled pixel");
    bool any_fg = false;
    for (auto l : labels) any_fg |= (l != 0);
    if (!any_fg) throw NoForegroundAnchors("every sampled pixel is background");
}

}  // namespace loss_detail

// S-DVD-CL: per (anchor view, target view) ordered pair, anchors are the
// non-background pixels of the first view and positives are all equal-class
// pixels of the second view (supervised-contrastive, mean over positives
// outside the log). Both directions averaged, then mean over target views.
template <typename T>
LossResult<T> loss_sdvd(const std::vector<Mat<T>>& z, const std::vector<std::uint8_t>& labels,
                        double tau, bool want_grad = false) {
    require(z.size() >= 2, "loss.bad_arguments", "S-DVD needs at least one target view");
    const int V = static_cast<int>(z.size());
    const int K = z[0].rows;
    loss_detail::check_labels(labels, K);
    const double inv_tau = 1.0 / tau;

    std::vector<int> anchors;
    for (int i = 0; i < K; ++i)
        if (labels[i] != 0) anchors.push_back(i);
    std::vector<int> class_count(kNumClasses, 0);
    for (auto l : labels) class_count[l]++;

    LossResult<T> res;
    std::vector<Mat<T>> dzt;
    if (want_grad) {
        for (const auto& m : z) res.dz.emplace_back(m.rows, m.cols);
        for (int v = 0; v < V; ++v) dzt.emplace_back(z[0].cols, K);
    }
    std::vector<Mat<T>> zt;
    zt.reserve(V);
    for (const auto& m : z) zt.push_back(loss_detail::transpose(m));

    const int na = static_cast<int>(anchors.size());
    const double pair_w = 1.0 / ((V - 1) * 2.0 * na);
    for (int t = 1; t < V; ++t) {
        const int pair_views[2][2] = {{0, t}, {t, 0}};
        for (const auto& pv : pair_views) {
            // compact anchor rows of the first view against all rows of the second
            Mat<T> a(na, z[0].cols);
            for (int r = 0; r < na; ++r) {
                std::copy(z[pv[0]].row(anchors[r]), z[pv[0]].row(anchors[r]) + z[0].cols, a.row(r));
            }
            Mat<T> s = loss_detail::sim_block(a, zt[pv[1]], inv_tau);
            std::vector<Mat<T>*> bl{&s};
            for (int r = 0; r < na; ++r) {
                const int cls = labels[anchors[r]];
                const int npos = class_count[cls];
                T* sr = s.row(r);
                const T mx = loss_detail::row_max(bl, r);
                double possum = 0.0;
                for (int j = 0; j < K; ++j)
                    if (labels[j] == cls) possum += static_cast<double>(sr[j]);
                const double denom = loss_detail::row_exp_pass(bl, r, mx);
                const double lse = static_cast<double>(mx) + std::log(denom);
                res.value += pair_w * (npos * lse - possum) / npos;

                if (want_grad) {
                    const T scale = static_cast<T>(pair_w / denom);
                    const T pos_w = static_cast<T>(pair_w / npos);
                    for (int j = 0; j < K; ++j) {
                        sr[j] *= scale;
                        if (labels[j] == cls) sr[j] -= pos_w;
                    }
                }
            }
            if (want_grad) {
                Mat<T> da(na, z[0].cols);
                loss_detail::block_grad(a, zt[pv[1]], s, inv_tau, da, dzt[pv[1]]);
                for (int r = 0; r < na; ++r) {
                    T* dst = res.dz[pv[0]].row(anchors[r]);
                    const T* src = da.row(r);
                    for (int d = 0; d < z[0].cols; ++d) dst[d] += src[d];
                }
            }
        }
    }
    if (want_grad) {
        for (int v = 0; v < V; ++v) loss_detail::add_transposed(res.dz[v], dzt[v]);
    }
    return res;
}

// S-MVD-CL: pooled form. Anchors are all non-background pooled pixels;
// positives are the equal-class pixels of the other views; candidates are all
// other-view pixels (consistent with MVD's pooled denominator).
template <typename T>
LossResult<T> loss_smvd(const std::vector<Mat<T>>& z, const std::vector<std::uint8_t>& labels,
                        double tau, bool want_grad = false) {
    const int V = static_cast<int>(z.size());
    require(V >= 2, "loss.bad_arguments", "S-MVD needs at least two views");
    const int K = z[0].rows;
    loss_detail::check_labels(labels, K);
    const double inv_tau = 1.0 / tau;

    std::vector<int> fg;
    for (int i = 0; i < K; ++i)
        if (labels[i] != 0) fg.push_back(i);
    std::vector<int> class_count(kNumClasses, 0);
    for (auto l : labels) class_count[l]++;

    LossResult<T> res;
    std::vector<Mat<T>> dzt;
    if (want_grad) {
        for (const auto& m : z) res.dz.emplace_back(m.rows, m.cols);
        for (int v = 0; v < V; ++v) dzt.emplace_back(z[0].cols, K);
    }
    std::vector<Mat<T>> zt;
    zt.reserve(V);
    for (const auto& m : z) zt.push_back(loss_detail::transpose(m));

    const int nfg = static_cast<int>(fg.size());
    const double anchor_w = 1.0 / (static_cast<double>(V) * nfg);
    for (int v = 0; v < V; ++v) {
        std::vector<int> others;
        for (int u = 0; u < V; ++u)
            if (u != v) others.push_back(u);

        Mat<T> a(nfg, z[0].cols);
        for (int r = 0; r < nfg; ++r) {
            std::copy(z[v].row(fg[r]), z[v].row(fg[r]) + z[0].cols, a.row(r));
        }
        std::vector<Mat<T>> blocks;
        blocks.reserve(others.size());
        for (int u : others) blocks.push_back(loss_detail::sim_block(a, zt[u], inv_tau));
        std::vector<Mat<T>*> block_ptrs;
        for (auto& b : blocks) block_ptrs.push_back(&b);

        for (int r = 0; r < nfg; ++r) {
            const int cls = labels[fg[r]];
            const int npos = (V - 1) * class_count[cls];
            const T mx = loss_detail::row_max(block_ptrs, r);
            double possum = 0.0;
            for (const auto& b : blocks) {
                const T* sr = b.row(r);
                for (int j = 0; j < K; ++j)
                    if (labels[j] == cls) possum += static_cast<double>(sr[j]);
            }
            const double denom = loss_detail::row_exp_pass(block_ptrs, r, mx);
            const double lse = static_cast<double>(mx) + std::log(denom);
            res.value += anchor_w * (npos * lse - possum) / npos;

            if (want_grad) {
                const T scale = static_cast<T>(anchor_w / denom);
                const T pos_w = static_cast<T>(anchor_w / npos);
                for (auto& b : blocks) {
                    T* sr = b.row(r);
                    for (int j = 0; j < K; ++j) {
                        sr[j] *= scale;
                        if (labels[j] == cls) sr[j] -= pos_w;
                    }
                }
            }
        }
        if (want_grad) {
            Mat<T> da(nfg, z[0].cols);
            for (std::size_t b = 0; b < others.size(); ++b) {
                loss_detail::block_grad(a, zt[others[b]], blocks[b], inv_tau, da, dzt[others[b]]);
            }
            for (int r = 0; r < nfg; ++r) {
                T* dst = res.dz[v].row(fg[r]);
                const T* src = da.row(r);
                for (int d = 0; d < z[0].cols; ++d) dst[d] += src[d];
            }
        }
    }
    if (want_grad) {
        for (int v = 0; v < V; ++v) loss_detail::add_transposed(res.dz[v], dzt[v]);
    }
    return res;
}

// Dispatch on gathered per-view matrices.
template <typename T>
LossResult<T> pixel_loss(LossMethod method, const std::vector<Mat<T>>& z,
                         const std::vector<std::uint8_t>& labels, const LossConfig& cfg,
                         bool want_grad = false) {
    cfg.validate();
    switch (method) {
        case LossMethod::Dvd: return loss_dvd(z, cfg.tau, want_grad);
        case LossMethod::Mvd: return loss_mvd(z, cfg.tau, want_grad);
        case LossMethod::Sdvd: return loss_sdvd(z, labels, cfg.tau, want_grad);
        case LossMethod::Smvd: return loss_smvd(z, labels, cfg.tau, want_grad);
    }
    throw Error("loss.bad_method", "unreachable");
}

// Field-level entry: gathers sampled embeddings from every view, computes the
// loss, and (optionally) returns per-view gradient matrices.
template <typename T>
LossResult<T> pixel_loss_on_fields(LossMethod method, const std::vector<EmbeddingField<T>>& fields,
                                   const PixelBatch& batch, const LossConfig& cfg,
                                   bool want_grad = false) {
    require(static_cast<int>(fields.size()) == batch.views(), "loss.bad_arguments",
            "one embedding field per view required");
    std::vector<Mat<T>> z;
    z.reserve(fields.size());
    for (int v = 0; v < batch.views(); ++v) z.push_back(gather_embeddings(fields[v], batch, v));
    return pixel_loss(method, z, batch.labels, cfg, want_grad);
}

}  // namespace dccl
