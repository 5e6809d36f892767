// Command-line front end: dataset generation, experiment execution, LID
// report export, and baseline comparison.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "colafier/experiment.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::int64_t seed = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "experiment config file (JSON)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", args.seed, "seed override");
    cmd->add_option("--out", args.out_dir, "output directory override");
}

colafier::ExperimentSpec load_spec(const CommonArgs& args) {
    colafier::ExperimentSpec spec;
    if (!args.config_path.empty()) spec = colafier::parse_config(args.config_path);
    if (args.seed >= 0) spec.train.seed = static_cast<std::uint64_t>(args.seed);
    if (!args.out_dir.empty()) spec.out_dir = args.out_dir;
    spec.validate();
    return spec;
}

int cmd_gen_data(const CommonArgs& args) {
    colafier::ExperimentSpec spec = load_spec(args);
    colafier::BuiltData data = colafier::build_datasets(spec);
    std::filesystem::create_directories(spec.out_dir);
    // one file: train rows first, then the clean test rows
    colafier::Dataset whole = data.train;
    for (const auto& inst : data.test.instances) whole.instances.push_back(inst);
    const std::string path =
        (std::filesystem::path(spec.out_dir) / "dataset.txt").string();
    colafier::save_dataset(path, whole);
    std::printf("wrote %s: %zu train + %zu test rows, %zu classes, dim %zu, noise %.4f\n",
                path.c_str(), data.train.size(), data.test.size(), whole.n_classes, whole.dim,
                data.initial_noise);
    return 0;
}

int cmd_train(const CommonArgs& args) {
    return colafier::run_experiment(load_spec(args));
}

int cmd_lid_report(const CommonArgs& args) {
    colafier::ExperimentSpec spec = load_spec(args);
    spec.mode = colafier::TrainMode::colafier;
    colafier::ExperimentResult res = colafier::run_experiment_collect(spec, true);
    for (const colafier::EpochReport& r : res.reports) {
        if (r.lid_auc_value >= 0.0)
            std::printf("epoch %zu lid_auc %.4f\n", r.epoch, r.lid_auc_value);
    }
    std::printf("lid report written to %s\n",
                (std::filesystem::path(spec.out_dir) / "lid_report.txt").c_str());
    return 0;
}

int cmd_compare(const CommonArgs& args) {
    return colafier::run_compare(load_spec(args));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dual-view noisy-label training with LID-guided weighting and correction"};
    app.require_subcommand(1);

    CommonArgs gen_args, train_args, lid_args, cmp_args;
    CLI::App* gen = app.add_subcommand("gen-data", "generate a noisy dataset file");
    add_common(gen, gen_args);
    CLI::App* tr = app.add_subcommand("train", "run one experiment and write artifacts");
    add_common(tr, train_args);
    CLI::App* lid = app.add_subcommand("lid-report", "train and export per-instance LID scores");
    add_common(lid, lid_args);
    CLI::App* cmp = app.add_subcommand("compare", "run colafier and both baselines, print deltas");
    add_common(cmp, cmp_args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(gen_args);
        if (tr->parsed()) return cmd_train(train_args);
        if (lid->parsed()) return cmd_lid_report(lid_args);
        if (cmp->parsed()) return cmd_compare(cmp_args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 1;
}
