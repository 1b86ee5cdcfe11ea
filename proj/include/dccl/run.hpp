#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "dccl/config.hpp"
#include "dccl/dataset.hpp"
#include "dccl/finetune.hpp"
#include "dccl/latent_eval.hpp"
#include "dccl/png.hpp"
#include "dccl/pretrain.hpp"

namespace dccl {

// ---------------------------------------------------------------------------
// Command implementations. Each writes its artifacts (with the config hash
// embedded) under the run directory and returns a JSON summary.
// ---------------------------------------------------------------------------

namespace run_detail {

inline std::filesystem::path prepare_run_dir(const RunConfig& cfg, const std::string& command) {
    const auto dir = cfg.run_dir(command);
    std::filesystem::create_directories(dir);
    detail::save_json_file(dir / "config.json", cfg.tree);
    return dir;
}

inline std::filesystem::path dataset_dir(const RunConfig& cfg, const std::filesystem::path& run_dir) {
    std::string d = cfg.tree["paths"]["dataset"];
    if (!d.empty()) return d;
    return run_dir.parent_path() / "dataset";
}

inline std::filesystem::path checkpoint_path(const RunConfig& cfg,
                                             const std::filesystem::path& run_dir) {
    std::string c = cfg.tree["paths"]["checkpoint"];
    if (!c.empty()) return c;
    return run_dir.parent_path() / "pretrain" / "checkpoint.ckpt";
}

// Stratified per-class pixel sample of one labeled image's embeddings.
inline void collect_latent_points(const EmbeddingField<float>& field, const LabelMask& mask,
                                  int pixels_per_image, Rng& rng, std::vector<std::vector<double>>& rows,
                                  std::vector<int>& labels) {
    const int per_class = std::max(1, pixels_per_image / kNumClasses);
    for (int cls = 0; cls < kNumClasses; ++cls) {
        std::vector<int> pool;
        for (int i = 0; i < mask.h * mask.w; ++i) {
            if (mask.v[i] == cls) pool.push_back(i);
        }
        if (pool.empty()) continue;
        const int take = std::min<int>(per_class, static_cast<int>(pool.size()));
        for (int t = 0; t < take; ++t) {
            const std::size_t j = t + rng.uniform_index(pool.size() - t);
            std::swap(pool[t], pool[j]);
            const int pix = pool[t];
            std::vector<double> row(field.d);
            for (int d = 0; d < field.d; ++d) {
                row[d] = field.v[static_cast<std::size_t>(pix) * field.d + d];
            }
            rows.push_back(std::move(row));
            labels.push_back(cls);
        }
    }
}

}  // namespace run_detail

struct LatentReport {
    double purity = 0.0;
    double d_over_sigma = 0.0;
    std::vector<int> class_sizes;
    int n_points = 0;
};

// Latent-space evaluation protocol: class-stratified pixel sample per image,
// pooled, k-means with k = 3, purity and d/sigma against the true labels.
inline LatentReport evaluate_latent(const ModelParams<float>& params,
                                    const std::vector<Sample>& samples, int pixels_per_image,
                                    std::uint64_t kmeans_seed, int max_images = 0) {
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    int used = 0;
    for (const auto& s : samples) {
        if (max_images > 0 && used >= max_images) break;
        require(s.mask.has_value(), "data.labels_required", "latent evaluation needs labels");
        const EmbeddingField<float> field = forward(params, s.image);
        Rng rng(Rng::stream_seed(kmeans_seed, 0x1a7e, static_cast<std::uint64_t>(s.index)));
        run_detail::collect_latent_points(field, *s.mask, pixels_per_image, rng, rows, labels);
        ++used;
    }
    require(!rows.empty(), "latent.too_few_points", "no evaluation pixels collected");

    Mat<double> x(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy(rows[i].begin(), rows[i].end(), x.row(static_cast<int>(i)));
    }
    const ClusterAssignment assignment = kmeans(x, kNumClasses, kmeans_seed);

    LatentReport rep;
    rep.n_points = x.rows;
    rep.purity = purity(assignment, labels);
    rep.d_over_sigma = d_over_sigma(x, labels);
    rep.class_sizes.assign(kNumClasses, 0);
    for (int l : labels) rep.class_sizes[l]++;
    return rep;
}

inline json run_gen_data(const RunConfig& cfg) {
    const auto run_dir = run_detail::prepare_run_dir(cfg, "gen-data");
    const auto out_dir = run_detail::dataset_dir(cfg, run_dir);
    DatasetMeta meta;
    meta.image_size = cfg.image_size();
    meta.noise_sigma = cfg.tree["data"]["noise_sigma"];
    meta.with_labels = cfg.tree["data"]["with_labels"];
    meta.config_hash = cfg.hash();
    write_dataset(out_dir, cfg.tree["data"]["n_train"], cfg.tree["data"]["n_val"],
                  cfg.tree["data"]["fraction_pe"], cfg.tree["data"]["seed"], meta);
    json summary{{"command", "gen-data"},
                 {"dataset", out_dir.string()},
                 {"n_train", cfg.tree["data"]["n_train"]},
                 {"n_val", cfg.tree["data"]["n_val"]},
                 {"config_hash", cfg.hash()}};
    detail::save_json_file(run_dir / "summary.json", summary);
    return summary;
}

inline json run_pretrain(const RunConfig& cfg) {
    const auto run_dir = run_detail::prepare_run_dir(cfg, "pretrain");
    const Dataset ds = read_dataset(run_detail::dataset_dir(cfg, run_dir));

    const PretrainConfig pc = cfg.pretrain_config();
    if (loss_is_supervised(pc.method) && !ds.meta.with_labels) {
        throw ConfigError("data.labels_required",
                          "loss method '" + loss_method_name(pc.method) +
                              "' needs a dataset generated with labels");
    }

    std::ofstream log_csv(run_dir / "training_log.csv");
    log_csv << "# config_hash=" << cfg.hash() << "\n";
    log_csv << "step,loss,lr,wall_ms\n";
    const int log_every = cfg.tree["train"]["log_every"];
    PretrainResult res = pretrain(ds.train, pc, cfg.hash(), [&](const StepLog& s) {
        if (log_every > 0 && s.step % log_every == 0) {
            log_csv << s.step << ',' << s.loss << ',' << s.lr << ',' << s.wall_ms << "\n";
        }
    });
    log_csv.close();

    const auto ckpt_path = run_dir / "checkpoint.ckpt";
    save_checkpoint(ckpt_path, res.checkpoint);

    double final_loss = res.log.empty() ? 0.0 : res.log.back().loss;
    json summary{{"command", "pretrain"},
                 {"loss_method", loss_method_name(pc.method)},
                 {"steps", pc.steps},
                 {"final_loss", final_loss},
                 {"checkpoint", ckpt_path.string()},
                 {"config_hash", cfg.hash()}};
    detail::save_json_file(run_dir / "summary.json", summary);
    return summary;
}

inline json run_eval_latent(const RunConfig& cfg) {
    const auto run_dir = run_detail::prepare_run_dir(cfg, "eval-latent");
    const Dataset ds = read_dataset(run_detail::dataset_dir(cfg, run_dir));
    const Checkpoint ckpt = load_checkpoint(run_detail::checkpoint_path(cfg, run_dir));

    const std::string split = cfg.tree["eval"]["split"];
    const LatentReport rep =
        evaluate_latent(ckpt.params, ds.split(split), cfg.tree["eval"]["pixels_per_image"],
                        cfg.tree["eval"]["kmeans_seed"], cfg.tree["eval"]["max_images"]);

    json out{{"command", "eval-latent"},
             {"purity", rep.purity},
             {"d_over_sigma", rep.d_over_sigma},
             {"class_sizes", rep.class_sizes},
             {"n_points", rep.n_points},
             {"config_hash", cfg.hash()}};
    detail::save_json_file(run_dir / "latent.json", out);
    return out;
}

inline json run_chromap(const RunConfig& cfg) {
    const auto run_dir = run_detail::prepare_run_dir(cfg, "chromap");
    const Dataset ds = read_dataset(run_detail::dataset_dir(cfg, run_dir));
    const Checkpoint ckpt = load_checkpoint(run_detail::checkpoint_path(cfg, run_dir));

    const std::string split = cfg.tree["chromap"]["split"];
    const int index = cfg.tree["chromap"]["image_index"];
    const auto& samples = ds.split(split);
    require(index >= 0 && index < static_cast<int>(samples.size()), "chromap.bad_arguments",
            "image_index out of range");

    const Sample& s = samples[index];
    const EmbeddingField<float> field = forward(ckpt.params, s.image);
    const ChromapResult res = chromap_render(field, s.image, cfg.chromap_options());

    const auto png_path = run_dir / "chromap.png";
    write_png(png_path, res.overlay, {{"config_hash", cfg.hash()}});

    json out{{"command", "chromap"},
             {"image", png_path.string()},
             {"degenerate_projection", res.degenerate_projection},
             {"ellipse",
              {{"cx", res.ellipse.cx},
               {"cy", res.ellipse.cy},
               {"e00", res.ellipse.e00},
               {"e01", res.ellipse.e01},
               {"e11", res.ellipse.e11}}},
             {"config_hash", cfg.hash()}};
    detail::save_json_file(run_dir / "summary.json", out);
    return out;
}

// Head tensors ride in a dedicated file next to each fold's net checkpoint.
inline void save_seg_head(const std::filesystem::path& path, const SegHead<float>& head) {
    std::vector<float> payload(head.weight.v);
    payload.insert(payload.end(), head.bias.v.begin(), head.bias.v.end());
    write_f32_file(path, payload.data(), payload.size());
}

inline SegHead<float> load_seg_head(const std::filesystem::path& path, int embed_dim) {
    SegHead<float> head = SegHead<float>::make(embed_dim, 0);
    const auto payload = read_f32_file(path, head.weight.v.size() + head.bias.v.size());
    std::copy(payload.begin(), payload.begin() + head.weight.v.size(), head.weight.v.begin());
    std::copy(payload.begin() + head.weight.v.size(), payload.end(), head.bias.v.begin());
    return head;
}

inline json run_finetune(const RunConfig& cfg) {
    const auto run_dir = run_detail::prepare_run_dir(cfg, "finetune");
    const Dataset ds = read_dataset(run_detail::dataset_dir(cfg, run_dir));
    require(ds.meta.with_labels, "data.labels_required", "fine-tuning needs a labeled dataset");

    std::optional<ModelParams<float>> init;
    NetConfig net_cfg = cfg.net();
    const std::string init_path = cfg.tree["finetune"]["init_checkpoint"];
    if (!init_path.empty()) {
        const Checkpoint ckpt = load_checkpoint(init_path);
        init = ckpt.params;
        net_cfg = ckpt.params.cfg;
    }

    const FinetuneConfig fc = cfg.finetune_config();
    const std::vector<FoldModel> models = finetune(init, net_cfg, ds.train, fc);

    json fold_info = json::array();
    for (std::size_t f = 0; f < models.size(); ++f) {
        const auto fold_dir = run_dir / ("fold_" + std::to_string(f));
        std::filesystem::create_directories(fold_dir);
        Checkpoint out;
        out.params = models[f].params;
        out.opt = SgdState<float>::make(out.params);
        out.seed = fc.seed;
        out.step = fc.epochs;
        out.config_hash = cfg.hash();
        save_checkpoint(fold_dir / "net.ckpt", out);
        save_seg_head(fold_dir / "seg_head.f32", models[f].head);
        fold_info.push_back({{"fold", f},
                             {"net", (fold_dir / "net.ckpt").string()},
                             {"head", (fold_dir / "seg_head.f32").string()},
                             {"final_epoch_loss", models[f].epoch_losses.back()}});
    }
    json out{{"command", "finetune"},
             {"folds", fold_info},
             {"init_checkpoint", init_path},
             {"config_hash", cfg.hash()}};
    detail::save_json_file(run_dir / "summary.json", out);
    return out;
}

inline json run_eval_seg(const RunConfig& cfg) {
    const auto run_dir = run_detail::prepare_run_dir(cfg, "eval-seg");
    const Dataset ds = read_dataset(run_detail::dataset_dir(cfg, run_dir));
    const FinetuneConfig fc = cfg.finetune_config();

    std::string models_dir = cfg.tree["paths"]["checkpoint"];
    if (models_dir.empty()) models_dir = (run_dir.parent_path() / "finetune").string();

    std::vector<FoldModel> models;
    for (int f = 0; f < fc.folds; ++f) {
        const auto fold_dir = std::filesystem::path(models_dir) / ("fold_" + std::to_string(f));
        FoldModel fm;
        const Checkpoint ckpt = load_checkpoint(fold_dir / "net.ckpt");
        fm.params = ckpt.params;
        fm.head = load_seg_head(fold_dir / "seg_head.f32", ckpt.params.cfg.embed_dim);
        models.push_back(std::move(fm));
    }

    const SegMetrics metrics = evaluate_folds(models, ds.train, fc.folds, fc.seed);

    std::ofstream csv(run_dir / "per_sample.csv");
    csv << "# config_hash=" << cfg.hash() << "\n";
    csv << "fold,index,pe,dsc,dsc_left,dsc_right,hd95,asd\n";
    for (const auto& sm : metrics.per_sample) {
        csv << sm.fold << ',' << sm.index << ',' << (sm.pe ? 1 : 0) << ',' << sm.dsc << ','
            << sm.dsc_left << ',' << sm.dsc_right << ',' << sm.hd95 << ',' << sm.asd << "\n";
    }
    csv.close();

    auto ms = [](const MeanStd& m) { return json{{"mean", m.mean}, {"std", m.stddev}}; };
    json out{{"command", "eval-seg"},
             {"dsc", ms(metrics.dsc)},
             {"dsc_nf", ms(metrics.dsc_nf)},
             {"dsc_pe", ms(metrics.dsc_pe)},
             {"hd95", ms(metrics.hd95)},
             {"asd", ms(metrics.asd)},
             {"skipped_surfaces", metrics.skipped_surfaces},
             {"config_hash", cfg.hash()}};
    detail::save_json_file(run_dir / "metrics.json", out);
    return out;
}

// CLI entry: parses config + overrides, dispatches, maps failures to a
// single-line machine-readable error.
inline int run_command(const std::string& command, const std::string& config_path,
                       const std::vector<std::string>& overrides, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
    try {
        const RunConfig cfg = RunConfig::load(config_path, overrides);
        json summary;
        if (command == "gen-data") {
            summary = run_gen_data(cfg);
        } else if (command == "pretrain") {
            summary = run_pretrain(cfg);
        } else if (command == "eval-latent") {
            summary = run_eval_latent(cfg);
        } else if (command == "chromap") {
            summary = run_chromap(cfg);
        } else if (command == "finetune") {
            summary = run_finetune(cfg);
        } else if (command == "eval-seg") {
            summary = run_eval_seg(cfg);
        } else {
            throw ConfigError("cli.unknown_command", "unknown command: " + command);
        }
        out << summary.dump(2) << std::endl;
        return 0;
    } catch (const Error& e) {
        err << "error " << e.category() << ": " << e.what() << std::endl;
        return 1;
    } catch (const std::exception& e) {
        err << "error internal: " << e.what() << std::endl;
        return 1;
    }
}

}  // namespace dccl
