#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dccl/phantom.hpp"

namespace dccl {

using json = nlohmann::json;

inline json ellipse_to_json(const Ellipse& e) {
    return json{{"cx", e.cx}, {"cy", e.cy}, {"ax", e.ax}, {"ay", e.ay}, {"angle", e.angle}};
}

inline Ellipse ellipse_from_json(const json& j) {
    Ellipse e;
    e.cx = j.at("cx");
    e.cy = j.at("cy");
    e.ax = j.at("ax");
    e.ay = j.at("ay");
    e.angle = j.at("angle");
    return e;
}

inline json spec_to_json(const PhantomSpec& s) {
    return json{{"h", s.size.h},
                {"w", s.size.w},
                {"left_lung", ellipse_to_json(s.left_lung)},
                {"right_lung", ellipse_to_json(s.right_lung)},
                {"spine_x", s.spine_x},
                {"spine_w", s.spine_w},
                {"pe", s.pe},
                {"pe_fill", s.pe_fill},
                {"scanner", scanner_name(s.scanner)},
                {"noise_sigma", s.noise_sigma},
                {"seed", s.seed}};
}

inline PhantomSpec spec_from_json(const json& j) {
    PhantomSpec s;
    s.size = {j.at("h"), j.at("w")};
    s.left_lung = ellipse_from_json(j.at("left_lung"));
    s.right_lung = ellipse_from_json(j.at("right_lung"));
    s.spine_x = j.at("spine_x");
    s.spine_w = j.at("spine_w");
    s.pe = j.at("pe");
    s.pe_fill = j.at("pe_fill");
    s.scanner = scanner_from_name(j.at("scanner"));
    s.noise_sigma = j.at("noise_sigma");
    s.seed = j.at("seed");
    return s;
}

struct Sample {
    int index = 0;
    PhantomSpec spec;
    Image image;
    std::optional<LabelMask> mask;
};

struct DatasetMeta {
    std::uint64_t seed = 0;
    double fraction_pe = 0.5;
    Size image_size{128, 128};
    double noise_sigma = 0.02;
    bool with_labels = true;
    std::string config_hash;
};

struct Dataset {
    DatasetMeta meta;
    std::vector<Sample> train;
    std::vector<Sample> val;

    const std::vector<Sample>& split(const std::string& name) const {
        if (name == "train") return train;
        if (name == "val") return val;
        throw IoError("unknown split: " + name);
    }
};

namespace detail {

inline json load_json_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open " + p.string());
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw IoError("bad JSON in " + p.string() + ": " + e.what());
    }
    return j;
}

inline void save_json_file(const std::filesystem::path& p, const json& j) {
    std::ofstream out(p);
    if (!out) throw IoError("cannot open for write " + p.string());
    out << j.dump(2) << '\n';
}

inline void write_sample(const std::filesystem::path& dir, const Sample& s, bool with_labels) {
    std::filesystem::create_directories(dir);
    write_f32_file(dir / "image.f32", s.image.v.data(), s.image.v.size());
    json manifest{{"index", s.index},
                  {"h", s.image.h},
                  {"w", s.image.w},
                  {"seed", s.spec.seed},
                  {"pe", s.spec.pe},
                  {"scanner", scanner_name(s.spec.scanner)},
                  {"tags", json::array({"factual"})},
                  // anchor-frame transform of the stored tensors (identity: base frame)
                  {"affine", json::array({1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0})},
                  {"spec", spec_to_json(s.spec)},
                  {"files", json{{"image", "image.f32"}}}};
    if (with_labels && s.mask) {
        std::vector<float> mf(s.mask->v.size());
        for (std::size_t i = 0; i < mf.size(); ++i) mf[i] = static_cast<float>(s.mask->v[i]);
        write_f32_file(dir / "mask.f32", mf.data(), mf.size());
        manifest["files"]["mask"] = "mask.f32";
    }
    save_json_file(dir / "manifest.json", manifest);
}

inline Sample read_sample(const std::filesystem::path& dir) {
    const json manifest = load_json_file(dir / "manifest.json");
    Sample s;
    s.index = manifest.at("index");
    s.spec = spec_from_json(manifest.at("spec"));
    const int h = manifest.at("h");
    const int w = manifest.at("w");
    const AffineMap frame = AffineMap::from_rows(manifest.at("affine").get<std::vector<double>>());
    require(frame == AffineMap::identity(), "dataset.bad_frame",
            "stored samples must be in the base frame");
    s.image.h = h;
    s.image.w = w;
    s.image.v = read_f32_file(dir / manifest.at("files").at("image").get<std::string>(),
                              static_cast<std::size_t>(h) * w);
    if (manifest.at("files").contains("mask")) {
        const auto mf = read_f32_file(dir / manifest.at("files").at("mask").get<std::string>(),
                                      static_cast<std::size_t>(h) * w);
        LabelMask m(h, w);
        for (std::size_t i = 0; i < mf.size(); ++i) {
            const long id = std::lround(mf[i]);
            require(id >= 0 && id < kNumClasses, "dataset.bad_mask", "illegal class id in mask");
            m.v[i] = static_cast<std::uint8_t>(id);
        }
        s.mask = std::move(m);
    }
    return s;
}

inline std::string sample_dirname(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%06d", index);
    return buf;
}

// Deterministic PE assignment: exactly lround(n * fraction) positives spread
// over a seeded shuffle of the indices.
inline std::vector<bool> stratify_pe(int n, double fraction_pe, Rng& rng) {
    const int n_pe = static_cast<int>(std::lround(n * fraction_pe));
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(i) + 1));
        std::swap(idx[i], idx[j]);
    }
    std::vector<bool> pe(n, false);
    for (int i = 0; i < n_pe; ++i) pe[idx[i]] = true;
    return pe;
}

}  // namespace detail

// Generates and writes a phantom dataset:
//   dir/dataset.json
//   dir/{train,val}/sample_XXXXXX/{image.f32, mask.f32, manifest.json}
inline void write_dataset(const std::filesystem::path& dir, int n_train, int n_val,
                          double fraction_pe, std::uint64_t seed, const DatasetMeta& opts = {}) {
    require(n_train >= 0 && n_val >= 0, "dataset.bad_arguments", "negative sample count");
    require(fraction_pe >= 0.0 && fraction_pe <= 1.0, "dataset.bad_arguments",
            "fraction_PE must be in [0, 1]");
    DatasetMeta meta = opts;
    meta.seed = seed;
    meta.fraction_pe = fraction_pe;

    std::filesystem::create_directories(dir);

    json root{{"format", "dccl-dataset-v1"},
              {"seed", seed},
              {"fraction_pe", fraction_pe},
              {"image", json{{"h", meta.image_size.h}, {"w", meta.image_size.w}}},
              {"noise_sigma", meta.noise_sigma},
              {"with_labels", meta.with_labels},
              {"splits", json{{"train", n_train}, {"val", n_val}}},
              {"config_hash", meta.config_hash}};
    detail::save_json_file(dir / "dataset.json", root);

    const std::pair<std::string, int> splits[] = {{"train", n_train}, {"val", n_val}};
    std::uint64_t split_salt = 1;
    for (const auto& [name, n] : splits) {
        const std::filesystem::path split_dir = dir / name;
        std::filesystem::create_directories(split_dir);
        Rng strat_rng(Rng::stream_seed(seed, split_salt, 0));
        const std::vector<bool> pe = detail::stratify_pe(n, fraction_pe, strat_rng);
        for (int i = 0; i < n; ++i) {
            Rng sample_rng(Rng::stream_seed(seed, split_salt, static_cast<std::uint64_t>(i) + 1));
            const Scanner sc = sample_rng.bernoulli(0.5) ? Scanner::B : Scanner::A;
            Sample s;
            s.index = i;
            s.spec = random_phantom_spec(sample_rng, meta.image_size, pe[i], sc, meta.noise_sigma);
            auto [img, mask] = render_phantom(s.spec);
            s.image = std::move(img);
            if (meta.with_labels) s.mask = std::move(mask);
            detail::write_sample(split_dir / detail::sample_dirname(i), s, meta.with_labels);
        }
        ++split_salt;
    }
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
    const json root = detail::load_json_file(dir / "dataset.json");
    Dataset ds;
    ds.meta.seed = root.at("seed");
    ds.meta.fraction_pe = root.at("fraction_pe");
    ds.meta.image_size = {root.at("image").at("h"), root.at("image").at("w")};
    ds.meta.noise_sigma = root.at("noise_sigma");
    ds.meta.with_labels = root.at("with_labels");
    ds.meta.config_hash = root.value("config_hash", "");

    for (const std::string name : {"train", "val"}) {
        const int n = root.at("splits").at(name);
        auto& out = (name == "train") ? ds.train : ds.val;
        out.reserve(n);
        for (int i = 0; i < n; ++i) {
            out.push_back(detail::read_sample(dir / name / detail::sample_dirname(i)));
        }
    }
    return ds;
}

}  // namespace dccl
