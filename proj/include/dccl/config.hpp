#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dccl/augment.hpp"
#include "dccl/chromap.hpp"
#include "dccl/contrastive.hpp"
#include "dccl/errors.hpp"
#include "dccl/finetune.hpp"
#include "dccl/net.hpp"
#include "dccl/pretrain.hpp"

namespace dccl {

inline json default_config() {
    return json{
        {"data",
         {{"dir", ""},
          {"h", 128},
          {"w", 128},
          {"n_train", 200},
          {"n_val", 20},
          {"fraction_pe", 0.5},
          {"noise_sigma", 0.02},
          {"with_labels", true},
          {"seed", 1234}}},
        {"augment",
         {{"geom", {{"rotation_max_deg", 15.0}, {"crop_scale_lo", 0.7}, {"crop_scale_hi", 1.0}}},
          {"photo",
           {{"brightness_max", 0.2},
            {"contrast_lo", 0.7},
            {"contrast_hi", 1.4},
            {"blur_sigma_lo", 0.5},
            {"blur_sigma_hi", 1.5},
            {"solarize_lo", 0.6},
            {"solarize_hi", 0.95},
            {"p_brightness", 0.5},
            {"p_contrast", 0.5},
            {"p_blur", 0.3},
            {"p_solarize", 0.1}}}}},
        {"model", {{"base_channels", 16}, {"embed_dim", 16}}},
        {"loss", {{"method", "dvd"}, {"tau", 0.1}, {"k", 1000}}},
        {"train",
         {{"steps", 1000}, {"lr", 0.1}, {"momentum", 0.9}, {"batch", 1}, {"seed", 42},
          {"schedule", "constant"}, {"warmup_steps", 0},
          {"log_every", 1}, {"parallel_views", true}}},
        {"eval", {{"pixels_per_image", 2000}, {"kmeans_seed", 7}, {"split", "val"}, {"max_images", 0}}},
        {"chromap",
         {{"method", "pca"}, {"alpha", 0.6}, {"tol", 1e-6}, {"global_fit", false},
          {"split", "val"}, {"image_index", 0}, {"seed", 0}}},
        {"finetune",
         {{"folds", 5}, {"epochs", 8}, {"lr", 0.05}, {"momentum", 0.9}, {"seed", 99},
          {"ce_weight", 1.0}, {"dice_weight", 1.0}, {"init_checkpoint", ""}}},
        {"paths", {{"run_dir", ""}, {"dataset", ""}, {"checkpoint", ""}}},
    };
}

namespace config_detail {

inline void merge_into(json& base, const json& overlay, const std::string& where) {
    for (auto it = overlay.begin(); it != overlay.end(); ++it) {
        if (!base.contains(it.key())) {
            throw ConfigError("config.unknown_key", "unknown config key: " + where + it.key());
        }
        if (it->is_object() && base[it.key()].is_object()) {
            merge_into(base[it.key()], *it, where + it.key() + ".");
        } else {
            base[it.key()] = *it;
        }
    }
}

inline json parse_scalar(const std::string& text) {
    json v = json::parse(text, nullptr, false);
    if (v.is_discarded()) return json(text);  // plain string
    return v;
}

}  // namespace config_detail

// Run configuration: defaults, overlaid by an optional JSON file, overlaid by
// dotted-path overrides ("train.lr=0.05").
struct RunConfig {
    json tree = default_config();

    static RunConfig load(const std::string& path, const std::vector<std::string>& overrides) {
        RunConfig cfg;
        if (!path.empty()) {
            std::ifstream in(path);
            if (!in) throw ConfigError("config.not_found", "config file not found: " + path);
            json file;
            try {
                in >> file;
            } catch (const std::exception& e) {
                throw ConfigError("config.parse_error", std::string("bad config JSON: ") + e.what());
            }
            config_detail::merge_into(cfg.tree, file, "");
        }
        for (const auto& ov : overrides) cfg.apply_override(ov);
        return cfg;
    }

    void apply_override(const std::string& assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config.bad_override", "override must be key.path=value: " + assignment);
        }
        const std::string path = assignment.substr(0, eq);
        const json value = config_detail::parse_scalar(assignment.substr(eq + 1));

        json* node = &tree;
        std::size_t start = 0;
        while (true) {
            const auto dot = path.find('.', start);
            const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
            if (!node->contains(key)) {
                throw ConfigError("config.unknown_key", "unknown config key: " + path);
            }
            if (dot == std::string::npos) {
                (*node)[key] = value;
                break;
            }
            node = &(*node)[key];
            start = dot + 1;
        }
    }

    // FNV-1a over the canonical (sorted-key) JSON dump.
    std::string hash() const {
        const std::string s = tree.dump();
        std::uint64_t h = 1469598103934665603ULL;
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }

    // ---- typed section accessors -------------------------------------------

    Size image_size() const { return {tree["data"]["h"], tree["data"]["w"]}; }

    GeomAugmentConfig geom() const {
        GeomAugmentConfig g;
        const auto& j = tree["augment"]["geom"];
        g.rotation_max_deg = j["rotation_max_deg"];
        g.crop_scale_lo = j["crop_scale_lo"];
        g.crop_scale_hi = j["crop_scale_hi"];
        g.out = {0, 0};
        return g;
    }

    PhotoAugmentConfig photo() const {
        PhotoAugmentConfig p;
        const auto& j = tree["augment"]["photo"];
        p.brightness_max = j["brightness_max"];
        p.contrast_lo = j["contrast_lo"];
        p.contrast_hi = j["contrast_hi"];
        p.blur_sigma_lo = j["blur_sigma_lo"];
        p.blur_sigma_hi = j["blur_sigma_hi"];
        p.solarize_lo = j["solarize_lo"];
        p.solarize_hi = j["solarize_hi"];
        p.p_brightness = j["p_brightness"];
        p.p_contrast = j["p_contrast"];
        p.p_blur = j["p_blur"];
        p.p_solarize = j["p_solarize"];
        return p;
    }

    NetConfig net() const {
        NetConfig n;
        n.base_channels = tree["model"]["base_channels"];
        n.embed_dim = tree["model"]["embed_dim"];
        return n;
    }

    LossMethod loss_method() const { return loss_method_from_name(tree["loss"]["method"]); }

    LossConfig loss() const {
        LossConfig l;
        l.tau = tree["loss"]["tau"];
        l.k = tree["loss"]["k"];
        return l;
    }

    PretrainConfig pretrain_config() const {
        PretrainConfig p;
        p.net = net();
        p.method = loss_method();
        p.loss = loss();
        p.geom = geom();
        p.photo = photo();
        p.steps = tree["train"]["steps"];
        p.batch = tree["train"]["batch"];
        p.lr = tree["train"]["lr"];
        p.momentum = tree["train"]["momentum"];
        const std::string sched = tree["train"]["schedule"];
        if (sched == "constant") {
            p.schedule = LrSchedule::Constant;
        } else if (sched == "cosine") {
            p.schedule = LrSchedule::Cosine;
        } else {
            throw ConfigError("config.bad_value", "unknown lr schedule: " + sched);
        }
        p.warmup_steps = tree["train"]["warmup_steps"];
        p.seed = tree["train"]["seed"];
        p.parallel_views = tree["train"]["parallel_views"];
        return p;
    }

    FinetuneConfig finetune_config() const {
        FinetuneConfig f;
        f.folds = tree["finetune"]["folds"];
        f.epochs = tree["finetune"]["epochs"];
        f.lr = tree["finetune"]["lr"];
        f.momentum = tree["finetune"]["momentum"];
        f.seed = tree["finetune"]["seed"];
        f.loss_weights.ce = tree["finetune"]["ce_weight"];
        f.loss_weights.dice = tree["finetune"]["dice_weight"];
        return f;
    }

    ChromapOptions chromap_options() const {
        ChromapOptions c;
        c.method = projection_from_name(tree["chromap"]["method"]);
        c.alpha = tree["chromap"]["alpha"];
        c.mvee_tol = tree["chromap"]["tol"];
        c.seed = tree["chromap"]["seed"];
        return c;
    }

    std::filesystem::path run_dir(const std::string& command) const {
        std::string dir = tree["paths"]["run_dir"];
        if (dir.empty()) {
            if (const char* env = std::getenv("DCCL_RUN_DIR")) dir = env;
        }
        if (dir.empty()) dir = "runs";
        return std::filesystem::path(dir) / command;
    }
};

}  // namespace dccl
