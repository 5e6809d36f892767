#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "colafier/experiment.hpp"

using namespace colafier;
using nlohmann::json;

TEST_CASE("parse_config: empty object yields the full default spec") {
    ExperimentSpec spec = parse_config_json(json::object());
    REQUIRE(spec.dataset.n_train == 2000);
    REQUIRE(spec.dataset.n_test == 1000);
    REQUIRE(spec.dataset.dim == 16);
    REQUIRE(spec.dataset.classes == 4);
    REQUIRE(spec.dataset.noise == NoiseKind::symmetric);
    REQUIRE(spec.dataset.noise_ratio == 0.4);
    REQUIRE(spec.train.total_epochs == 60);
    REQUIRE(spec.train.warmup_epochs == 15);
    REQUIRE(spec.train.batch_size == 128);
    REQUIRE(spec.train.lr == 0.001);
    REQUIRE(spec.train.weight_decay == 0.001);
    REQUIRE(spec.train.eps_w_low == 0.001);
    REQUIRE(spec.train.eps_w_high_start == 0.05);
    REQUIRE(spec.train.eps_u_low == 0.001);
    REQUIRE(spec.train.eps_u_high_start == 0.5);
    REQUIRE(spec.train.ramp_epochs == 30);
    REQUIRE(spec.train.eps_k == 0.1);
    REQUIRE(spec.train.lambda_star == 0.5);
    REQUIRE(spec.train.lambda_cons == 10.0);
    REQUIRE(spec.train.gce_q == 0.7);
    REQUIRE(spec.train.k_nn == 20);
    REQUIRE(spec.mode == TrainMode::colafier);
}

TEST_CASE("parse_config: invariant violations name the offending field") {
    json j{{"train", {{"batch_size", 4}, {"k_nn", 20}}}};
    REQUIRE_THROWS_WITH(parse_config_json(j),
                        Catch::Matchers::ContainsSubstring("batch_size"));

    json j2{{"dataset", {{"noise_ratio", 1.5}}}};
    REQUIRE_THROWS_WITH(parse_config_json(j2),
                        Catch::Matchers::ContainsSubstring("noise_ratio"));
}

TEST_CASE("parse_config: unknown keys are rejected") {
    json j{{"trian", {{"lr", 0.01}}}};
    REQUIRE_THROWS_WITH(parse_config_json(j), Catch::Matchers::ContainsSubstring("trian"));
    json j2{{"train", {{"learning_rate", 0.01}}}};
    REQUIRE_THROWS_WITH(parse_config_json(j2),
                        Catch::Matchers::ContainsSubstring("learning_rate"));
}

TEST_CASE("parse_config: malformed file reports the parse location") {
    const std::string path = "bad_config.json";
    {
        std::ofstream f(path);
        f << "{ \"train\": { \"lr\": }\n";
    }
    REQUIRE_THROWS_WITH(parse_config(path), Catch::Matchers::ContainsSubstring("line"));
    std::filesystem::remove(path);
    REQUIRE_THROWS_AS(parse_config("no_such_config.json"), std::runtime_error);
}

TEST_CASE("parse_config: values flow through") {
    json j{{"dataset",
            {{"n_train", 300}, {"n_test", 100}, {"dim", 8}, {"classes", 3},
             {"noise", "asymmetric"}, {"noise_ratio", 0.2}, {"spread", 0.25}}},
           {"train",
            {{"total_epochs", 20}, {"warmup_epochs", 5}, {"batch_size", 64}, {"k_nn", 10},
             {"seed", 99}, {"hidden", {16, 16}}}},
           {"mode", "plain-gce"},
           {"out_dir", "somewhere"}};
    ExperimentSpec spec = parse_config_json(j);
    REQUIRE(spec.dataset.n_train == 300);
    REQUIRE(spec.dataset.noise == NoiseKind::asymmetric);
    REQUIRE(spec.train.seed == 99);
    REQUIRE(spec.train.hidden == std::vector<std::size_t>{16, 16});
    REQUIRE(spec.mode == TrainMode::plain_gce);
    REQUIRE(spec.out_dir == "somewhere");
}

namespace {

ExperimentSpec tiny_spec(const std::string& out) {
    json j{{"dataset",
            {{"n_train", 150}, {"n_test", 60}, {"dim", 6}, {"classes", 3},
             {"noise_ratio", 0.3}, {"spread", 0.25}}},
           {"train",
            {{"total_epochs", 6}, {"warmup_epochs", 3}, {"batch_size", 50}, {"k_nn", 8},
             {"hidden", {16}}, {"seed", 5}}},
           {"out_dir", out}};
    return parse_config_json(j);
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace

TEST_CASE("run_experiment: writes all artifacts and reruns are byte-identical") {
    namespace fs = std::filesystem;
    const std::string out1 = "test_exp_out1";
    const std::string out2 = "test_exp_out2";

    ExperimentSpec s1 = tiny_spec(out1);
    REQUIRE(run_experiment(s1) == 0);
    REQUIRE(fs::exists(fs::path(out1) / "metrics.csv"));
    REQUIRE(fs::exists(fs::path(out1) / "lid_report.txt"));
    REQUIRE(fs::exists(fs::path(out1) / "checkpoint.bin"));
    REQUIRE(fs::exists(fs::path(out1) / "summary.txt"));

    // row count = total_epochs (+ header)
    std::ifstream csv(fs::path(out1) / "metrics.csv");
    std::string line;
    std::size_t lines = 0;
    while (std::getline(csv, line)) ++lines;
    REQUIRE(lines == 6 + 1);

    ExperimentSpec s2 = tiny_spec(out2);
    REQUIRE(run_experiment(s2) == 0);
    REQUIRE(slurp(fs::path(out1) / "metrics.csv") == slurp(fs::path(out2) / "metrics.csv"));
    REQUIRE(slurp(fs::path(out1) / "lid_report.txt") ==
            slurp(fs::path(out2) / "lid_report.txt"));

    fs::remove_all(out1);
    fs::remove_all(out2);
}

TEST_CASE("run_experiment: baseline mode on the same seed shares the dataset") {
    namespace fs = std::filesystem;
    const std::string out = "test_exp_out3";
    ExperimentSpec spec = tiny_spec(out);
    spec.mode = TrainMode::plain_ce;
    ExperimentResult res = run_experiment_collect(spec, true);
    REQUIRE(res.reports.size() == 6);
    REQUIRE(res.purification.updated_count == 0);
    // baselines never touch labels: residual = initial
    REQUIRE(res.purification.residual_noise_rate == res.initial_noise);
    // lid report holds only the header
    std::ifstream f(fs::path(out) / "lid_report.txt");
    std::string line;
    std::size_t lines = 0;
    while (std::getline(f, line)) ++lines;
    REQUIRE(lines == 1);
    f.close();
    fs::remove_all(out);
}

TEST_CASE("gen-data file round trips through dataset.file") {
    namespace fs = std::filesystem;
    const std::string out = "test_exp_out4";
    ExperimentSpec spec = tiny_spec(out);
    BuiltData data = build_datasets(spec);

    fs::create_directories(out);
    Dataset whole = data.train;
    for (const auto& inst : data.test.instances) whole.instances.push_back(inst);
    const std::string path = (fs::path(out) / "dataset.txt").string();
    save_dataset(path, whole);

    ExperimentSpec spec2 = spec;
    spec2.dataset.file = path;
    BuiltData loaded = build_datasets(spec2);
    REQUIRE(loaded.train.size() == data.train.size());
    REQUIRE(loaded.test.size() == data.test.size());
    REQUIRE(loaded.initial_noise == data.initial_noise);
    for (std::size_t i = 0; i < loaded.train.size(); ++i) {
        REQUIRE(loaded.train.instances[i].x == data.train.instances[i].x);
        REQUIRE(loaded.train.instances[i].noisy_label == data.train.instances[i].noisy_label);
    }
    fs::remove_all(out);
}
