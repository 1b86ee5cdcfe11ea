#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "dccl/run.hpp"

using namespace dccl;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("dccl_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Small-everything overrides so pipeline tests stay fast.
std::vector<std::string> tiny_overrides(const fs::path& root) {
    return {
        "paths.run_dir=" + (root / "runs").string(),
        "paths.dataset=" + (root / "dataset").string(),
        "data.h=16",
        "data.w=16",
        "data.n_train=6",
        "data.n_val=3",
        "model.base_channels=4",
        "model.embed_dim=4",
        "loss.k=32",
        "train.steps=8",
        "train.seed=5",
        "eval.pixels_per_image=60",
        "finetune.folds=2",
        "finetune.epochs=1",
        "augment.geom.rotation_max_deg=10",
        "augment.geom.crop_scale_lo=0.8",
    };
}

}  // namespace

TEST(Config, DefaultsValidateAndHashIsStable) {
    const RunConfig a = RunConfig::load("", {});
    const RunConfig b = RunConfig::load("", {});
    EXPECT_EQ(a.hash(), b.hash());
    RunConfig c = a;
    c.apply_override("train.lr=0.123");
    EXPECT_NE(c.hash(), a.hash());
    EXPECT_DOUBLE_EQ(c.tree["train"]["lr"].get<double>(), 0.123);
}

TEST(Config, OverrideParsesTypes) {
    RunConfig cfg;
    cfg.apply_override("loss.method=smvd");
    cfg.apply_override("train.steps=77");
    cfg.apply_override("data.with_labels=false");
    EXPECT_EQ(cfg.tree["loss"]["method"], "smvd");
    EXPECT_EQ(cfg.tree["train"]["steps"], 77);
    EXPECT_EQ(cfg.tree["data"]["with_labels"], false);
    EXPECT_EQ(cfg.loss_method(), LossMethod::Smvd);
}

TEST(Config, UnknownKeyAndBadOverrideAreRejected) {
    RunConfig cfg;
    EXPECT_THROW(cfg.apply_override("nope.thing=1"), ConfigError);
    EXPECT_THROW(cfg.apply_override("train.steps"), ConfigError);
}

TEST(Config, FileMergeRespectsSchema) {
    const fs::path dir = fresh_dir("cfgmerge");
    {
        std::ofstream out(dir / "cfg.json");
        out << R"({"train": {"steps": 3}, "loss": {"tau": 0.25}})";
    }
    const RunConfig cfg = RunConfig::load((dir / "cfg.json").string(), {});
    EXPECT_EQ(cfg.tree["train"]["steps"], 3);
    EXPECT_DOUBLE_EQ(cfg.tree["loss"]["tau"].get<double>(), 0.25);
    // untouched defaults survive
    EXPECT_DOUBLE_EQ(cfg.tree["train"]["momentum"].get<double>(), 0.9);

    {
        std::ofstream out(dir / "bad.json");
        out << R"({"trian": {"steps": 3}})";
    }
    EXPECT_THROW(RunConfig::load((dir / "bad.json").string(), {}), ConfigError);
    fs::remove_all(dir);
}

TEST(Cli, MissingConfigFileReportsCategory) {
    std::ostringstream out, err;
    const int code = run_command("gen-data", "/nonexistent/cfg.json", {}, out, err);
    EXPECT_EQ(code, 1);
    EXPECT_NE(err.str().find("error config.not_found"), std::string::npos);
}

TEST(Cli, UnknownCommandFails) {
    std::ostringstream out, err;
    const int code = run_command("frobnicate", "", {}, out, err);
    EXPECT_EQ(code, 1);
    EXPECT_NE(err.str().find("cli.unknown_command"), std::string::npos);
}

TEST(Cli, SupervisedLossOnUnlabeledDatasetFails) {
    const fs::path root = fresh_dir("nolabels");
    auto ov = tiny_overrides(root);
    ov.push_back("data.with_labels=false");
    std::ostringstream out, err;
    ASSERT_EQ(run_command("gen-data", "", ov, out, err), 0) << err.str();

    ov.push_back("loss.method=sdvd");
    std::ostringstream out2, err2;
    const int code = run_command("pretrain", "", ov, out2, err2);
    EXPECT_EQ(code, 1);
    EXPECT_NE(err2.str().find("data.labels_required"), std::string::npos);
    fs::remove_all(root);
}

// gen-data -> pretrain -> eval-latent -> chromap -> finetune -> eval-seg at
// toy scale; checks artifacts, config-hash embedding, and that the stratified
// means recompute from the per-sample CSV.
TEST(Cli, FullPipelineSmoke) {
    const fs::path root = fresh_dir("pipeline");
    const auto ov = tiny_overrides(root);

    for (const std::string cmd :
         {"gen-data", "pretrain", "eval-latent", "chromap", "finetune", "eval-seg"}) {
        std::ostringstream out, err;
        ASSERT_EQ(run_command(cmd, "", ov, out, err), 0) << cmd << " failed: " << err.str();
    }

    const fs::path runs = root / "runs";
    EXPECT_TRUE(fs::exists(runs / "pretrain" / "checkpoint.ckpt"));
    EXPECT_TRUE(fs::exists(runs / "pretrain" / "training_log.csv"));
    EXPECT_TRUE(fs::exists(runs / "chromap" / "chromap.png"));

    const RunConfig cfg = RunConfig::load("", ov);

    // every JSON artifact carries the config hash
    for (const auto& rel : {fs::path("eval-latent") / "latent.json",
                            fs::path("eval-seg") / "metrics.json",
                            fs::path("pretrain") / "summary.json"}) {
        std::ifstream in(runs / rel);
        ASSERT_TRUE(in.good()) << rel;
        json j;
        in >> j;
        EXPECT_EQ(j.at("config_hash"), cfg.hash()) << rel;
    }

    // latent report sanity
    {
        std::ifstream in(runs / "eval-latent" / "latent.json");
        json j;
        in >> j;
        const double p = j.at("purity");
        EXPECT_GE(p, 0.0);
        EXPECT_LE(p, 1.0);
        EXPECT_GE(j.at("d_over_sigma").get<double>(), 0.0);
    }

    // recomputation oracle: stratified DSC means from the per-sample CSV must
    // reproduce the aggregate JSON
    {
        std::ifstream in(runs / "eval-seg" / "per_sample.csv");
        ASSERT_TRUE(in.good());
        std::string line;
        std::getline(in, line);  // hash comment
        std::getline(in, line);  // header
        std::map<int, std::vector<double>> dsc_by_fold_pe[2];
        while (std::getline(in, line)) {
            std::stringstream ss(line);
            std::string tok;
            std::vector<std::string> cols;
            while (std::getline(ss, tok, ',')) cols.push_back(tok);
            ASSERT_GE(cols.size(), 8u);
            const int fold = std::stoi(cols[0]);
            const int pe = std::stoi(cols[2]);
            dsc_by_fold_pe[pe][fold].push_back(std::stod(cols[3]));
        }
        auto fold_means = [&](int pe) {
            std::vector<double> means;
            for (const auto& [fold, v] : dsc_by_fold_pe[pe]) {
                double s = 0;
                for (double x : v) s += x;
                means.push_back(s / v.size());
            }
            return means;
        };
        std::ifstream mj(runs / "eval-seg" / "metrics.json");
        json metrics;
        mj >> metrics;
        for (int pe = 0; pe < 2; ++pe) {
            const auto means = fold_means(pe);
            if (means.empty()) continue;
            double s = 0;
            for (double m : means) s += m;
            const double mean = s / means.size();
            const double reported = metrics.at(pe ? "dsc_pe" : "dsc_nf").at("mean");
            EXPECT_NEAR(mean, reported, 1e-9);
        }
    }
    fs::remove_all(root);
}

// Identical config + seed => bit-identical checkpoints (fast version of the
// full determinism criterion): the same run executed twice.
TEST(Cli, PretrainDeterminism) {
    const fs::path root = fresh_dir("det");
    const auto ov = tiny_overrides(root);
    std::ostringstream out, err;
    ASSERT_EQ(run_command("gen-data", "", ov, out, err), 0) << err.str();

    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    };
    const fs::path ckpt = root / "runs" / "pretrain" / "checkpoint.ckpt";
    ASSERT_EQ(run_command("pretrain", "", ov, out, err), 0) << err.str();
    const std::string first = slurp(ckpt);
    ASSERT_EQ(run_command("pretrain", "", ov, out, err), 0) << err.str();
    const std::string second = slurp(ckpt);
    ASSERT_FALSE(first.empty());
    EXPECT_EQ(first, second);
    fs::remove_all(root);
}
