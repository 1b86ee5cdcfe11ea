// Command-line front end: gen-data, pretrain, eval-latent, chromap, finetune,
// eval-seg. Configuration comes from an optional JSON file plus dotted-path
// overrides, e.g.
//
//   dccl pretrain -c run.json --set loss.method=sdvd --set train.steps=2000

#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dccl/run.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Dense counterfactual contrastive learning on synthetic chest phantoms"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"gen-data", "Generate a phantom dataset with counterfactual-ready specs"},
        {"pretrain", "Contrastive pre-training (dvd | mvd | sdvd | smvd)"},
        {"eval-latent", "K-means purity and d/sigma of the embedding space"},
        {"chromap", "Render a CHRO-map overlay PNG for one image"},
        {"finetune", "K-fold segmentation fine-tuning"},
        {"eval-seg", "DSC / HD95 / ASD evaluation of fine-tuned folds"},
    };

    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("-c,--config", config_path, "JSON config file");
        sub->add_option("--set", overrides, "Override a config value: key.path=value");
    }

    CLI11_PARSE(app, argc, argv);
    const std::string command = app.get_subcommands().front()->get_name();
    return dccl::run_command(command, config_path, overrides);
}
