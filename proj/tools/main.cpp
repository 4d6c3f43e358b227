#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "dcan/config.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out;
    int64_t seed = -1;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON configuration file");
    cmd->add_option("--set", args.overrides,
                    "Override a config key, e.g. --set train.lr=0.01 (repeatable)");
    cmd->add_option("--out", args.out, "Output directory (overrides paths.out)");
    cmd->add_option("--seed", args.seed, "Override both train.seed and synth.seed")
        ->check(CLI::NonNegativeNumber);
}

dcan::RunConfig resolve(CommonArgs& args, CLI::App* cmd) {
    std::vector<std::string> overrides = args.overrides;
    if (cmd->count("--seed")) {
        overrides.push_back("train.seed=" + std::to_string(args.seed));
        overrides.push_back("synth.seed=" + std::to_string(args.seed));
    }
    if (cmd->count("--out")) overrides.push_back("paths.out=" + args.out);
    return dcan::load_run_config(args.config_path, overrides);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dilated convolutional attention network for multi-label text classification"};
    app.require_subcommand(1);

    CommonArgs args;
    auto* synth = app.add_subcommand("synth", "Generate a planted-rule synthetic corpus");
    auto* preprocess =
        app.add_subcommand("preprocess", "Build the vocabulary and encoded dataset caches");
    auto* train = app.add_subcommand("train", "Train a model and keep the best checkpoint");
    auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on a labeled dataset");
    auto* predict = app.add_subcommand("predict", "Rank codes for unlabeled documents");
    for (auto* cmd : {synth, preprocess, train, evaluate, predict}) add_common(cmd, args);

    CLI11_PARSE(app, argc, argv);

    try {
        CLI::App* cmd = app.get_subcommands().front();
        const dcan::RunConfig cfg = resolve(args, cmd);
        if (cmd == synth) return dcan::cli::cmd_synth(cfg);
        if (cmd == preprocess) return dcan::cli::cmd_preprocess(cfg);
        if (cmd == train) return dcan::cli::cmd_train(cfg);
        if (cmd == evaluate) return dcan::cli::cmd_evaluate(cfg);
        return dcan::cli::cmd_predict(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
