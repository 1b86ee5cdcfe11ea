#pragma once

#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "dccl/dataset.hpp"
#include "dccl/net.hpp"
#include "dccl/seg_metrics.hpp"

namespace dccl {

// 1x1 convolution from D-dim pixel embeddings to class logits.
template <typename T>
struct SegHead {
    NamedTensor<T> weight;  // [classes, D]
    NamedTensor<T> bias;    // [classes]

    static SegHead make(int embed_dim, std::uint64_t seed) {
        SegHead h;
        h.weight = make_tensor<T>("seg_head.weight", {kNumClasses, embed_dim});
        h.bias = make_tensor<T>("seg_head.bias", {kNumClasses});
        Rng rng(seed);
        const double std_dev = std::sqrt(1.0 / embed_dim);
        for (auto& v : h.weight.v) v = static_cast<T>(rng.normal() * std_dev);
        return h;
    }
};

template <typename T>
Chw<T> seg_logits(const SegHead<T>& head, const EmbeddingField<T>& field) {
    const int d = field.d;
    Chw<T> logits(kNumClasses, field.h, field.w);
    const std::size_t hw = static_cast<std::size_t>(field.h) * field.w;
    for (std::size_t p = 0; p < hw; ++p) {
        const T* z = field.v.data() + p * d;
        for (int c = 0; c < kNumClasses; ++c) {
            T acc = head.bias.v[c];
            const T* wr = head.weight.v.data() + static_cast<std::size_t>(c) * d;
            for (int j = 0; j < d; ++j) acc += wr[j] * z[j];
            logits.v[static_cast<std::size_t>(c) * hw + p] = acc;
        }
    }
    return logits;
}

template <typename T>
LabelMask seg_predict(const Chw<T>& logits) {
    LabelMask out(logits.h, logits.w);
    const std::size_t hw = static_cast<std::size_t>(logits.h) * logits.w;
    for (std::size_t p = 0; p < hw; ++p) {
        int best = 0;
        T bv = logits.v[p];
        for (int c = 1; c < kNumClasses; ++c) {
            const T v = logits.v[static_cast<std::size_t>(c) * hw + p];
            if (v > bv) {
                bv = v;
                best = c;
            }
        }
        out.v[p] = static_cast<std::uint8_t>(best);
    }
    return out;
}

struct SegLossWeights {
    double ce = 1.0;
    double dice = 1.0;
};

// Pixel-mean cross entropy plus soft Dice over the foreground classes.
// Returns the loss and fills dlogits.
template <typename T>
double seg_loss(const Chw<T>& logits, const LabelMask& gt, const SegLossWeights& weights,
                std::type_identity_t<Chw<T>*> dlogits) {
    require(logits.h == gt.h && logits.w == gt.w, "seg.bad_arguments", "logits/mask size mismatch");
    const std::size_t hw = static_cast<std::size_t>(logits.h) * logits.w;
    const double npix = static_cast<double>(hw);

    // softmax probabilities, max-subtracted per pixel
    std::vector<double> prob(hw * kNumClasses);
    for (std::size_t p = 0; p < hw; ++p) {
        double m = static_cast<double>(logits.v[p]);
        for (int c = 1; c < kNumClasses; ++c) {
            m = std::max(m, static_cast<double>(logits.v[static_cast<std::size_t>(c) * hw + p]));
        }
        double sum = 0.0;
        for (int c = 0; c < kNumClasses; ++c) {
            const double e = std::exp(static_cast<double>(logits.v[static_cast<std::size_t>(c) * hw + p]) - m);
            prob[p * kNumClasses + c] = e;
            sum += e;
        }
        for (int c = 0; c < kNumClasses; ++c) prob[p * kNumClasses + c] /= sum;
    }

    double ce = 0.0;
    for (std::size_t p = 0; p < hw; ++p) {
        ce -= std::log(std::max(prob[p * kNumClasses + gt.v[p]], 1e-12));
    }
    ce /= npix;

    // soft dice over classes 1..2
    constexpr double eps = 1e-6;
    double inter[kNumClasses] = {0, 0, 0};
    double denom[kNumClasses] = {0, 0, 0};
    for (std::size_t p = 0; p < hw; ++p) {
        for (int c = 1; c < kNumClasses; ++c) {
            const double pi = prob[p * kNumClasses + c];
            const double gi = gt.v[p] == c ? 1.0 : 0.0;
            inter[c] += pi * gi;
            denom[c] += pi + gi;
        }
    }
    double dice_mean = 0.0;
    for (int c = 1; c < kNumClasses; ++c) dice_mean += 2.0 * inter[c] / (denom[c] + eps);
    dice_mean /= (kNumClasses - 1);
    const double dice_loss = 1.0 - dice_mean;

    const double total = weights.ce * ce + weights.dice * dice_loss;
    if (!dlogits) return total;

    *dlogits = Chw<T>(kNumClasses, logits.h, logits.w);
    for (std::size_t p = 0; p < hw; ++p) {
        double dprob[kNumClasses] = {0, 0, 0};
        // CE on probabilities handled directly on logits below; dice via dprob.
        for (int c = 1; c < kNumClasses; ++c) {
            const double gi = gt.v[p] == c ? 1.0 : 0.0;
            const double s = denom[c] + eps;
            // d(1 - 2I/S)/dpi = -(2 gi S - 2 I) / S^2
            dprob[c] += -weights.dice * (2.0 * gi * s - 2.0 * inter[c]) / (s * s) / (kNumClasses - 1);
        }
        // chain through softmax; add CE's (p - onehot)/N on logits
        double dot = 0.0;
        for (int c = 0; c < kNumClasses; ++c) dot += dprob[c] * prob[p * kNumClasses + c];
        for (int c = 0; c < kNumClasses; ++c) {
            const double pi = prob[p * kNumClasses + c];
            double g = pi * (dprob[c] - dot);
            g += weights.ce * (pi - (gt.v[p] == c ? 1.0 : 0.0)) / npix;
            dlogits->v[static_cast<std::size_t>(c) * hw + p] = static_cast<T>(g);
        }
    }
    return total;
}

template <typename T>
void seg_head_backward(const SegHead<T>& head, const EmbeddingField<T>& field, const Chw<T>& dlogits,
                       SegHead<T>& dhead, EmbeddingField<T>& dfield) {
    const int d = field.d;
    const std::size_t hw = static_cast<std::size_t>(field.h) * field.w;
    dfield = EmbeddingField<T>(field.h, field.w, d);
    for (std::size_t p = 0; p < hw; ++p) {
        const T* z = field.v.data() + p * d;
        T* dz = dfield.v.data() + p * d;
        for (int c = 0; c < kNumClasses; ++c) {
            const T up = dlogits.v[static_cast<std::size_t>(c) * hw + p];
            dhead.bias.v[c] += up;
            const T* wr = head.weight.v.data() + static_cast<std::size_t>(c) * d;
            T* wg = dhead.weight.v.data() + static_cast<std::size_t>(c) * d;
            for (int j = 0; j < d; ++j) {
                wg[j] += up * z[j];
                dz[j] += up * wr[j];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// K-fold fine-tuning.
// ---------------------------------------------------------------------------

struct FinetuneConfig {
    int folds = 5;
    int epochs = 8;
    double lr = 0.05;
    double momentum = 0.9;
    std::uint64_t seed = 0;
    SegLossWeights loss_weights;
};

// Seeded shuffle split: each sample appears in exactly one fold's validation
// list.
inline std::vector<std::vector<int>> make_folds(int n, int folds, std::uint64_t seed) {
    require(folds >= 2 && folds <= n, "seg.bad_arguments", "need 2 <= folds <= n");
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(i) + 1));
        std::swap(idx[i], idx[j]);
    }
    std::vector<std::vector<int>> out(folds);
    for (int i = 0; i < n; ++i) out[i % folds].push_back(idx[i]);
    return out;
}

struct FoldModel {
    ModelParams<float> params;
    SegHead<float> head;
    std::vector<double> epoch_losses;
};

// Trains net + head on one sample list. All parameters train.
inline FoldModel train_seg_fold(const std::optional<ModelParams<float>>& init,
                                const NetConfig& net_cfg, const std::vector<Sample>& samples,
                                const std::vector<int>& train_idx, const FinetuneConfig& cfg,
                                std::uint64_t fold_salt) {
    FoldModel fm;
    fm.params = init ? *init : init_params<float>(net_cfg, Rng::stream_seed(cfg.seed, fold_salt, 1));
    fm.head = SegHead<float>::make(net_cfg.embed_dim, Rng::stream_seed(cfg.seed, fold_salt, 2));

    SgdState<float> net_state = SgdState<float>::make(fm.params);
    NamedTensor<float> vw = make_tensor<float>("seg_head.weight.vel", fm.head.weight.shape);
    NamedTensor<float> vb = make_tensor<float>("seg_head.bias.vel", fm.head.bias.shape);

    Rng order_rng(Rng::stream_seed(cfg.seed, fold_salt, 3));
    std::vector<int> order = train_idx;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = order_rng.uniform_index(i);
            std::swap(order[i - 1], order[j]);
        }
        double epoch_loss = 0.0;
        for (int si : order) {
            const Sample& s = samples[si];
            require(s.mask.has_value(), "data.labels_required", "fine-tuning needs labeled samples");

            ForwardTrace<float> trace;
            forward_trace(fm.params, image_to_chw<float>(s.image), trace);
            const Chw<float> logits = seg_logits(fm.head, trace.field);
            Chw<float> dlogits;
            epoch_loss += seg_loss(logits, *s.mask, cfg.loss_weights, &dlogits);

            SegHead<float> dhead;
            dhead.weight = make_tensor<float>("seg_head.weight", fm.head.weight.shape);
            dhead.bias = make_tensor<float>("seg_head.bias", fm.head.bias.shape);
            EmbeddingField<float> dfield;
            seg_head_backward(fm.head, trace.field, dlogits, dhead, dfield);

            ModelParams<float> grads = zero_grads(fm.params);
            backward(fm.params, trace, dfield, grads);

            sgd_step(fm.params, grads, net_state, cfg.lr, cfg.momentum);
            for (const auto& t : {&dhead.weight, &dhead.bias}) {
                for (float v : t->v) {
                    if (!std::isfinite(v)) throw NonFiniteGradient("non-finite gradient in " + t->name);
                }
            }
            for (std::size_t j = 0; j < vw.v.size(); ++j) {
                vw.v[j] = static_cast<float>(cfg.momentum) * vw.v[j] + dhead.weight.v[j];
                fm.head.weight.v[j] -= static_cast<float>(cfg.lr) * vw.v[j];
            }
            for (std::size_t j = 0; j < vb.v.size(); ++j) {
                vb.v[j] = static_cast<float>(cfg.momentum) * vb.v[j] + dhead.bias.v[j];
                fm.head.bias.v[j] -= static_cast<float>(cfg.lr) * vb.v[j];
            }
        }
        fm.epoch_losses.push_back(epoch_loss / std::max<std::size_t>(1, order.size()));
    }
    return fm;
}

inline std::vector<FoldModel> finetune(const std::optional<ModelParams<float>>& init,
                                       const NetConfig& net_cfg, const std::vector<Sample>& samples,
                                       const FinetuneConfig& cfg) {
    require(!samples.empty(), "seg.bad_arguments", "empty dataset");
    const auto folds = make_folds(static_cast<int>(samples.size()), cfg.folds, cfg.seed);
    std::vector<FoldModel> out;
    for (int f = 0; f < cfg.folds; ++f) {
        std::vector<int> train_idx;
        for (int g = 0; g < cfg.folds; ++g) {
            if (g == f) continue;
            train_idx.insert(train_idx.end(), folds[g].begin(), folds[g].end());
        }
        std::sort(train_idx.begin(), train_idx.end());
        out.push_back(train_seg_fold(init, net_cfg, samples, train_idx, cfg,
                                     static_cast<std::uint64_t>(f) + 1));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation: per-class-averaged DSC (classes 1 and 2), PE stratification,
// HD95/ASD; mean +- sample std across folds.
// ---------------------------------------------------------------------------

struct SampleMetrics {
    int fold = 0;
    int index = 0;
    bool pe = false;
    double dsc = 0.0;
    double dsc_left = 0.0;
    double dsc_right = 0.0;
    double hd95 = 0.0;   // NaN when a surface was empty
    double asd = 0.0;
};

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;
};

struct SegMetrics {
    MeanStd dsc, dsc_nf, dsc_pe, hd95, asd;
    std::vector<SampleMetrics> per_sample;
    int skipped_surfaces = 0;  // class surfaces missing from pred or gt
};

inline MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd out;
    if (xs.empty()) return out;
    double s = 0.0;
    for (double x : xs) s += x;
    out.mean = s / xs.size();
    if (xs.size() > 1) {
        double q = 0.0;
        for (double x : xs) q += (x - out.mean) * (x - out.mean);
        out.stddev = std::sqrt(q / (xs.size() - 1));
    }
    return out;
}

inline SegMetrics evaluate_folds(const std::vector<FoldModel>& models,
                                 const std::vector<Sample>& samples, int folds, std::uint64_t seed) {
    const auto fold_val = make_folds(static_cast<int>(samples.size()), folds, seed);
    SegMetrics out;

    std::vector<double> f_dsc, f_nf, f_pe, f_hd, f_asd;
    for (int f = 0; f < folds; ++f) {
        std::vector<double> dscs, nf, pe, hds, asds;
        for (int si : fold_val[f]) {
            const Sample& s = samples[si];
            require(s.mask.has_value(), "data.labels_required", "evaluation needs labels");
            const EmbeddingField<float> field = forward(models[f].params, s.image);
            const LabelMask pred = seg_predict(seg_logits(models[f].head, field));

            SampleMetrics sm;
            sm.fold = f;
            sm.index = s.index;
            sm.pe = s.spec.pe;
            sm.dsc_left = dice(pred, *s.mask, 1);
            sm.dsc_right = dice(pred, *s.mask, 2);
            sm.dsc = 0.5 * (sm.dsc_left + sm.dsc_right);

            double hd_sum = 0.0, asd_sum = 0.0;
            int hd_n = 0;
            for (int cls = 1; cls < kNumClasses; ++cls) {
                try {
                    const SurfaceDistances sd = surface_distances(pred, *s.mask, cls);
                    hd_sum += sd.hd95;
                    asd_sum += sd.asd;
                    hd_n++;
                } catch (const EmptySurface&) {
                    out.skipped_surfaces++;
                }
            }
            sm.hd95 = hd_n > 0 ? hd_sum / hd_n : std::numeric_limits<double>::quiet_NaN();
            sm.asd = hd_n > 0 ? asd_sum / hd_n : std::numeric_limits<double>::quiet_NaN();

            out.per_sample.push_back(sm);
            dscs.push_back(sm.dsc);
            (sm.pe ? pe : nf).push_back(sm.dsc);
            if (hd_n > 0) {
                hds.push_back(sm.hd95);
                asds.push_back(sm.asd);
            }
        }
        auto mean_of = [](const std::vector<double>& v) {
            double s = 0.0;
            for (double x : v) s += x;
            return v.empty() ? std::numeric_limits<double>::quiet_NaN() : s / v.size();
        };
        f_dsc.push_back(mean_of(dscs));
        if (!nf.empty()) f_nf.push_back(mean_of(nf));
        if (!pe.empty()) f_pe.push_back(mean_of(pe));
        if (!hds.empty()) f_hd.push_back(mean_of(hds));
        if (!asds.empty()) f_asd.push_back(mean_of(asds));
    }
    out.dsc = mean_std(f_dsc);
    out.dsc_nf = mean_std(f_nf);
    out.dsc_pe = mean_std(f_pe);
    out.hd95 = mean_std(f_hd);
    out.asd = mean_std(f_asd);
    return out;
}

}  // namespace dccl
