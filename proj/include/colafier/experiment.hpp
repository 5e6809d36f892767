#pragma once

// Experiment configuration, execution, and artifact export: per-epoch
// metrics.csv, the LID report, the final checkpoint, and the summary
// line. Baseline modes run the identical harness with weighting and
// updating disabled.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "colafier/metrics.hpp"
#include "colafier/noiselab.hpp"
#include "colafier/trainer.hpp"

namespace colafier {

struct DatasetSpec {
    std::size_t n_train = 2000;
    std::size_t n_test = 1000;
    std::size_t dim = 16;
    std::size_t classes = 4;
    double spread = 0.3;
    NoiseKind noise = NoiseKind::symmetric;
    double noise_ratio = 0.4;
    std::string file;  // optional: load instances from a dataset file instead of generating
};

struct ExperimentSpec {
    DatasetSpec dataset;
    TrainConfig train;
    std::string out_dir = "out";
    TrainMode mode = TrainMode::colafier;

    void validate() const {
        if (dataset.classes < 2)
            throw std::invalid_argument("config: dataset.classes must be >= 2");
        if (dataset.dim < 2) throw std::invalid_argument("config: dataset.dim must be >= 2");
        if (dataset.n_train < dataset.classes)
            throw std::invalid_argument("config: dataset.n_train must be >= dataset.classes");
        if (dataset.n_test == 0)
            throw std::invalid_argument("config: dataset.n_test must be positive");
        if (!(dataset.noise_ratio >= 0.0 && dataset.noise_ratio < 1.0))
            throw std::invalid_argument("config: dataset.noise_ratio outside [0,1)");
        if (!(dataset.spread > 0.0))
            throw std::invalid_argument("config: dataset.spread must be positive");
        train.validate();
    }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                                const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key))
            throw std::invalid_argument("config: unknown key \"" + key + "\" in " + where);
    }
}

}  // namespace detail

inline ExperimentSpec parse_config_json(const nlohmann::json& j) {
    ExperimentSpec spec;
    detail::reject_unknown_keys(j, {"dataset", "train", "mode", "out_dir"}, "top level");

    if (j.contains("dataset")) {
        const nlohmann::json& d = j.at("dataset");
        detail::reject_unknown_keys(
            d, {"n_train", "n_test", "dim", "classes", "spread", "noise", "noise_ratio", "file"},
            "dataset");
        if (d.contains("n_train")) spec.dataset.n_train = d.at("n_train").get<std::size_t>();
        if (d.contains("n_test")) spec.dataset.n_test = d.at("n_test").get<std::size_t>();
        if (d.contains("dim")) spec.dataset.dim = d.at("dim").get<std::size_t>();
        if (d.contains("classes")) spec.dataset.classes = d.at("classes").get<std::size_t>();
        if (d.contains("spread")) spec.dataset.spread = d.at("spread").get<double>();
        if (d.contains("noise"))
            spec.dataset.noise = noise_kind_from_string(d.at("noise").get<std::string>());
        if (d.contains("noise_ratio")) spec.dataset.noise_ratio = d.at("noise_ratio").get<double>();
        if (d.contains("file")) spec.dataset.file = d.at("file").get<std::string>();
    }
    if (j.contains("train")) {
        const nlohmann::json& t = j.at("train");
        detail::reject_unknown_keys(
            t,
            {"total_epochs", "warmup_epochs", "batch_size", "lr", "weight_decay", "eps_w_low",
             "eps_w_high_start", "eps_u_low", "eps_u_high_start", "ramp_epochs", "eps_k",
             "lambda_star", "lambda_cons", "gce_q", "k_nn", "mix_alpha", "seed", "hidden",
             "sigma1", "sigma2", "p_drop"},
            "train");
        TrainConfig& c = spec.train;
        if (t.contains("total_epochs")) c.total_epochs = t.at("total_epochs").get<std::size_t>();
        if (t.contains("warmup_epochs")) c.warmup_epochs = t.at("warmup_epochs").get<std::size_t>();
        if (t.contains("batch_size")) c.batch_size = t.at("batch_size").get<std::size_t>();
        if (t.contains("lr")) c.lr = t.at("lr").get<double>();
        if (t.contains("weight_decay")) c.weight_decay = t.at("weight_decay").get<double>();
        if (t.contains("eps_w_low")) c.eps_w_low = t.at("eps_w_low").get<double>();
        if (t.contains("eps_w_high_start"))
            c.eps_w_high_start = t.at("eps_w_high_start").get<double>();
        if (t.contains("eps_u_low")) c.eps_u_low = t.at("eps_u_low").get<double>();
        if (t.contains("eps_u_high_start"))
            c.eps_u_high_start = t.at("eps_u_high_start").get<double>();
        if (t.contains("ramp_epochs")) c.ramp_epochs = t.at("ramp_epochs").get<std::size_t>();
        if (t.contains("eps_k")) c.eps_k = t.at("eps_k").get<double>();
        if (t.contains("lambda_star")) c.lambda_star = t.at("lambda_star").get<double>();
        if (t.contains("lambda_cons")) c.lambda_cons = t.at("lambda_cons").get<double>();
        if (t.contains("gce_q")) c.gce_q = t.at("gce_q").get<double>();
        if (t.contains("k_nn")) c.k_nn = t.at("k_nn").get<std::size_t>();
        if (t.contains("mix_alpha")) c.mix_alpha = t.at("mix_alpha").get<double>();
        if (t.contains("seed")) c.seed = t.at("seed").get<std::uint64_t>();
        if (t.contains("hidden")) c.hidden = t.at("hidden").get<std::vector<std::size_t>>();
        if (t.contains("sigma1")) c.views.sigma1 = t.at("sigma1").get<double>();
        if (t.contains("sigma2")) c.views.sigma2 = t.at("sigma2").get<double>();
        if (t.contains("p_drop")) c.views.p_drop = t.at("p_drop").get<double>();
    }
    if (j.contains("mode")) spec.mode = train_mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("out_dir")) spec.out_dir = j.at("out_dir").get<std::string>();

    spec.validate();
    return spec;
}

inline ExperimentSpec parse_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        // nlohmann reports line and column in the message
        throw std::runtime_error(std::string("config: ") + e.what());
    }
    return parse_config_json(j);
}

struct BuiltData {
    Dataset train;
    Dataset test;
    double initial_noise = 0.0;
};

// Generates train+test blobs from a seed-derived stream (or loads them
// from dataset.file: rows [0, n_train) are the train split, the rest the
// test split) and injects noise into the train split only.
inline BuiltData build_datasets(const ExperimentSpec& spec) {
    BuiltData out;
    if (!spec.dataset.file.empty()) {
        Dataset whole = load_dataset(spec.dataset.file, spec.dataset.classes);
        if (whole.size() <= spec.dataset.n_train)
            throw std::runtime_error("config: dataset.file has no rows left for the test split");
        out.train.n_classes = out.test.n_classes = whole.n_classes;
        out.train.dim = out.test.dim = whole.dim;
        for (std::size_t i = 0; i < whole.size(); ++i) {
            if (i < spec.dataset.n_train)
                out.train.instances.push_back(whole.instances[i]);
            else
                out.test.instances.push_back(whole.instances[i]);
        }
    } else {
        // data stream decoupled from the training stream by a fixed mix
        Rng data_rng(spec.train.seed * 0x9E3779B97F4A7C15ull + 0x1234567);
        Dataset whole = make_blobs(spec.dataset.n_train + spec.dataset.n_test,
                                   spec.dataset.dim, spec.dataset.classes,
                                   spec.dataset.spread, data_rng);
        out.train.n_classes = out.test.n_classes = whole.n_classes;
        out.train.dim = out.test.dim = whole.dim;
        for (std::size_t i = 0; i < whole.size(); ++i) {
            if (i < spec.dataset.n_train)
                out.train.instances.push_back(std::move(whole.instances[i]));
            else
                out.test.instances.push_back(std::move(whole.instances[i]));
        }
        inject_noise(out.train, spec.dataset.noise, spec.dataset.noise_ratio, data_rng);
    }
    out.initial_noise = noise_rate(out.train);
    return out;
}

inline const char* train_mode_name(TrainMode m) {
    switch (m) {
        case TrainMode::colafier: return "colafier";
        case TrainMode::plain_ce: return "plain-ce";
        case TrainMode::plain_gce: return "plain-gce";
    }
    return "?";
}

namespace detail {

inline std::string format_metric(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// wall_ms is written as 0: metrics.csv is a deterministic artifact and
// must be byte-identical across reruns; measured timings go to stdout.
inline void write_metrics_csv(const std::string& path, const std::vector<EpochReport>& reports) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f << "epoch,split,accuracy,loss_clean,loss_hard,loss_noisy,updated,update_precision,"
         "lid_auc,wall_ms\n";
    for (const EpochReport& r : reports) {
        f << r.epoch << ",test," << format_metric(r.test_accuracy) << ','
          << format_metric(r.loss_clean) << ',' << format_metric(r.loss_hard) << ','
          << format_metric(r.loss_noisy) << ',' << r.updated << ','
          << (r.update_precision == kNoPrecision ? std::string("-1")
                                                 : format_metric(r.update_precision))
          << ',' << (r.lid_auc_value < 0.0 ? std::string("-1") : format_metric(r.lid_auc_value))
          << ",0\n";
    }
    if (!f) throw std::runtime_error("write failed for " + path);
}

}  // namespace detail

struct ExperimentResult {
    std::vector<EpochReport> reports;
    PurificationStats purification;
    double top3_accuracy = 0.0;
    double final_accuracy = 0.0;
    double initial_noise = 0.0;
};

// Full experiment: build data, train, write metrics.csv, lid_report.txt,
// checkpoint.bin, and summary.txt under spec.out_dir.
inline ExperimentResult run_experiment_collect(const ExperimentSpec& spec, bool quiet = false) {
    spec.validate();
    std::filesystem::create_directories(spec.out_dir);
    BuiltData data = build_datasets(spec);

    TrainResult tr = train(data.train, data.test, spec.train, spec.mode);

    ExperimentResult res;
    res.reports = tr.reports;
    res.purification = purification_stats(data.train, tr.update_log);
    res.top3_accuracy = top3_average_accuracy(tr.reports);
    res.final_accuracy = tr.reports.back().test_accuracy;
    res.initial_noise = data.initial_noise;

    const std::filesystem::path dir(spec.out_dir);
    detail::write_metrics_csv((dir / "metrics.csv").string(), tr.reports);
    save_lid_report((dir / "lid_report.txt").string(), tr.lid_rows);
    save_checkpoint((dir / "checkpoint.bin").string(), tr.ge, tr.ld);

    char summary[512];
    std::snprintf(summary, sizeof summary,
                  "summary mode=%s top3_acc=%.4f final_acc=%.4f updated=%zu "
                  "update_precision=%s residual_noise=%.4f initial_noise=%.4f",
                  train_mode_name(spec.mode), res.top3_accuracy, res.final_accuracy,
                  res.purification.updated_count,
                  res.purification.update_precision == kNoPrecision
                      ? "n/a"
                      : detail::format_metric(res.purification.update_precision).c_str(),
                  res.purification.residual_noise_rate, res.initial_noise);
    std::ofstream sf(dir / "summary.txt");
    sf << summary << "\n";
    if (!quiet) std::cout << summary << std::endl;
    return res;
}

inline int run_experiment(const ExperimentSpec& spec) {
    run_experiment_collect(spec);
    return 0;
}

// colafier plus both baselines on the identical data and seed; prints a
// delta table.
inline int run_compare(const ExperimentSpec& base) {
    std::vector<std::pair<TrainMode, ExperimentResult>> rows;
    for (TrainMode mode : {TrainMode::colafier, TrainMode::plain_ce, TrainMode::plain_gce}) {
        ExperimentSpec spec = base;
        spec.mode = mode;
        spec.out_dir = (std::filesystem::path(base.out_dir) / train_mode_name(mode)).string();
        std::cout << "running " << train_mode_name(mode) << "..." << std::endl;
        rows.push_back({mode, run_experiment_collect(spec, true)});
    }
    std::printf("%-10s %10s %10s %10s %10s\n", "mode", "top3_acc", "final_acc", "resid_noise",
                "updated");
    for (const auto& [mode, r] : rows) {
        std::printf("%-10s %10.4f %10.4f %10.4f %10zu\n", train_mode_name(mode),
                    r.top3_accuracy, r.final_accuracy, r.purification.residual_noise_rate,
                    r.purification.updated_count);
    }
    const double delta_ce = rows[0].second.top3_accuracy - rows[1].second.top3_accuracy;
    const double delta_gce = rows[0].second.top3_accuracy - rows[2].second.top3_accuracy;
    std::printf("delta(top3) colafier - plain-ce:  %+.4f\n", delta_ce);
    std::printf("delta(top3) colafier - plain-gce: %+.4f\n", delta_gce);
    return 0;
}

}  // namespace colafier
