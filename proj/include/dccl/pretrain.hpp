#pragma once

#include <chrono>
#include <functional>
#include <future>
#include <vector>

#include "dccl/checkpoint.hpp"
#include "dccl/contrastive.hpp"
#include "dccl/dataset.hpp"
#include "dccl/net.hpp"

namespace dccl {

enum class LrSchedule { Constant, Cosine };

struct PretrainConfig {
    NetConfig net;
    LossMethod method = LossMethod::Dvd;
    LossConfig loss;
    GeomAugmentConfig geom;
    PhotoAugmentConfig photo;
    int steps = 1000;
    int batch = 1;
    double lr = 0.1;
    double momentum = 0.9;
    LrSchedule schedule = LrSchedule::Constant;
    int warmup_steps = 0;
    std::uint64_t seed = 0;
    bool parallel_views = true;

    // Linear warmup to `lr`, then constant or cosine decay to zero.
    double lr_at(int step) const {
        if (warmup_steps > 0 && step < warmup_steps) {
            return lr * (step + 1) / static_cast<double>(warmup_steps);
        }
        if (schedule == LrSchedule::Constant || steps <= warmup_steps) return lr;
        const double t = static_cast<double>(step - warmup_steps) /
                         static_cast<double>(steps - warmup_steps);
        return lr * 0.5 * (1.0 + std::cos(M_PI * t));
    }

    void validate() const {
        require(steps >= 0 && batch >= 1, "train.bad_config", "steps >= 0 and batch >= 1 required");
        require(lr > 0.0 && momentum >= 0.0 && momentum < 1.0, "train.bad_config",
                "lr > 0 and momentum in [0, 1) required");
        require(warmup_steps >= 0, "train.bad_config", "warmup_steps must be >= 0");
        loss.validate();
        geom.validate();
        photo.validate();
    }
};

struct StepLog {
    int step = 0;
    double loss = 0.0;
    double lr = 0.0;
    double wall_ms = 0.0;
};

struct PretrainResult {
    Checkpoint checkpoint;
    std::vector<StepLog> log;
};

namespace pretrain_detail {

// Forward + loss + backward for one view set; gradients summed into `grads`.
// Per-view forward/backward passes can run on separate threads; the gradient
// reduction order stays fixed so results are reproducible.
inline double viewset_gradients(const ModelParams<float>& params, const ViewSet& vs,
                                LossMethod method, const LossConfig& loss_cfg, Rng& rng,
                                ModelParams<float>& grads, bool parallel) {
    const int n_views = 1 + static_cast<int>(vs.targets.size());
    std::vector<int> active(vs.targets.size());
    for (std::size_t i = 0; i < vs.targets.size(); ++i) active[i] = static_cast<int>(i);

    const PixelBatch batch =
        sample_pixels(vs, active, loss_cfg.k, rng, loss_is_supervised(method));

    std::vector<ForwardTrace<float>> traces(n_views);
    auto run_forward = [&](int v) {
        const Image& img = v == 0 ? vs.anchor_image : vs.targets[v - 1].image;
        forward_trace(params, image_to_chw<float>(img), traces[v]);
    };
    if (parallel) {
        std::vector<std::future<void>> futs;
        for (int v = 0; v < n_views; ++v) futs.push_back(std::async(std::launch::async, run_forward, v));
        for (auto& f : futs) f.get();
    } else {
        for (int v = 0; v < n_views; ++v) run_forward(v);
    }

    std::vector<EmbeddingField<float>> fields;
    fields.reserve(n_views);
    for (auto& t : traces) fields.push_back(t.field);
    const LossResult<float> res = pixel_loss_on_fields(method, fields, batch, loss_cfg, true);

    std::vector<ModelParams<float>> view_grads(n_views);
    auto run_backward = [&](int v) {
        EmbeddingField<float> dfield(fields[v].h, fields[v].w, fields[v].d);
        scatter_gradient(dfield, batch, v, res.dz[v]);
        view_grads[v] = zero_grads(params);
        backward(params, traces[v], dfield, view_grads[v]);
    };
    if (parallel) {
        std::vector<std::future<void>> futs;
        for (int v = 0; v < n_views; ++v) futs.push_back(std::async(std::launch::async, run_backward, v));
        for (auto& f : futs) f.get();
    } else {
        for (int v = 0; v < n_views; ++v) run_backward(v);
    }
    for (int v = 0; v < n_views; ++v) accumulate(grads, view_grads[v]);
    return res.value;
}

}  // namespace pretrain_detail

// Contrastive pre-training over the stored phantom specs. View sets are
// rebuilt with fresh augmentations every step; every random draw derives from
// (seed, step, batch item), so identical configs replay bit-exactly.
inline PretrainResult pretrain(const std::vector<Sample>& samples, const PretrainConfig& cfg,
                               const std::string& config_hash = "",
                               const std::function<void(const StepLog&)>& on_step = nullptr) {
    cfg.validate();
    require(!samples.empty(), "train.bad_config", "pretraining needs at least one sample");
    if (loss_is_supervised(cfg.method)) {
        for (const auto& s : samples) {
            require(s.mask.has_value(), "data.labels_required",
                    "supervised contrastive loss needs a labeled dataset");
        }
    }

    PretrainResult result;
    ModelParams<float> params = init_params<float>(cfg.net, cfg.seed);
    SgdState<float> opt = SgdState<float>::make(params);

    for (int step = 0; step < cfg.steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        ModelParams<float> grads = zero_grads(params);
        double loss_sum = 0.0;
        for (int b = 0; b < cfg.batch; ++b) {
            Rng rng(Rng::stream_seed(cfg.seed, static_cast<std::uint64_t>(step) + 1,
                                     static_cast<std::uint64_t>(b)));
            double value = 0.0;
            // an unlucky augmentation draw can empty the intersection; redraw
            // deterministically from follow-up sub-streams
            for (int attempt = 0;; ++attempt) {
                const std::size_t idx = rng.uniform_index(samples.size());
                Rng view_rng = rng.fork(7 + attempt);
                try {
                    ViewSet vs = build_view_set(samples[idx].spec, cfg.geom, cfg.photo, view_rng);
                    value = pretrain_detail::viewset_gradients(params, vs, cfg.method, cfg.loss,
                                                               view_rng, grads, cfg.parallel_views);
                    break;
                } catch (const EmptyIntersection&) {
                    if (attempt >= 20) throw;
                }
            }
            loss_sum += value;
        }
        if (cfg.batch > 1) {
            const float inv = 1.0f / static_cast<float>(cfg.batch);
            for (auto& t : grads.tensors)
                for (auto& v : t.v) v *= inv;
        }
        sgd_step(params, grads, opt, cfg.lr_at(step), cfg.momentum);

        const auto t1 = std::chrono::steady_clock::now();
        StepLog log;
        log.step = step;
        log.loss = loss_sum / cfg.batch;
        log.lr = cfg.lr_at(step);
        log.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        result.log.push_back(log);
        if (on_step) on_step(log);
    }

    result.checkpoint.params = std::move(params);
    result.checkpoint.opt = std::move(opt);
    result.checkpoint.seed = cfg.seed;
    result.checkpoint.step = cfg.steps;
    result.checkpoint.config_hash = config_hash;
    return result;
}

}  // namespace dccl
