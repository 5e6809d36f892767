#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <map>

#include "colafier/noiselab.hpp"

using namespace colafier;

TEST_CASE("make_blobs: one instance per class when n equals n_c") {
    Rng rng(81);
    Dataset ds = make_blobs(4, 3, 4, 0.1, rng);
    std::map<std::size_t, int> counts;
    for (const auto& inst : ds.instances) counts[label_class(inst.true_label)]++;
    REQUIRE(counts.size() == 4);
    for (auto& [c, n] : counts) REQUIRE(n == 1);
}

TEST_CASE("make_blobs: balanced counts and noisy initialized to true") {
    Rng rng(82);
    Dataset ds = make_blobs(103, 5, 4, 0.2, rng);
    std::map<std::size_t, int> counts;
    for (const auto& inst : ds.instances) {
        counts[label_class(inst.true_label)]++;
        REQUIRE(inst.noisy_label == inst.true_label);
    }
    int mn = 1 << 30, mx = 0;
    for (auto& [c, n] : counts) {
        mn = std::min(mn, n);
        mx = std::max(mx, n);
    }
    REQUIRE(mx - mn <= 1);
}

TEST_CASE("make_blobs: tiny spread is linearly separable via a centroid oracle") {
    Rng rng(83);
    Dataset ds = make_blobs(200, 4, 4, 1e-4, rng);
    // nearest-centroid classifier fit on true labels
    std::vector<Vec> centroids(4, Vec(4, 0.0));
    std::vector<int> counts(4, 0);
    for (const auto& inst : ds.instances) {
        const std::size_t c = label_class(inst.true_label);
        for (std::size_t j = 0; j < 4; ++j) centroids[c][j] += inst.x[j];
        counts[c]++;
    }
    for (std::size_t c = 0; c < 4; ++c)
        for (double& v : centroids[c]) v /= counts[c];
    for (const auto& inst : ds.instances) {
        std::size_t best = 0;
        double best_d = 1e300;
        for (std::size_t c = 0; c < 4; ++c) {
            double d2 = 0.0;
            for (std::size_t j = 0; j < 4; ++j)
                d2 += (inst.x[j] - centroids[c][j]) * (inst.x[j] - centroids[c][j]);
            if (d2 < best_d) {
                best_d = d2;
                best = c;
            }
        }
        REQUIRE(best == label_class(inst.true_label));
    }
}

TEST_CASE("make_blobs: fixed seed gives identical datasets") {
    Rng a(84), b(84);
    Dataset da = make_blobs(50, 6, 3, 0.3, a);
    Dataset db = make_blobs(50, 6, 3, 0.3, b);
    for (std::size_t i = 0; i < 50; ++i) {
        REQUIRE(da.instances[i].x == db.instances[i].x);
        REQUIRE(da.instances[i].true_label == db.instances[i].true_label);
    }
}

TEST_CASE("make_blobs: infeasible separation is rejected") {
    Rng rng(85);
    // centers live on the unit sphere, so pairwise distance <= 2;
    // 2*spread = 40 can never be met with 2+ classes
    REQUIRE_THROWS_AS(make_blobs(10, 4, 3, 20.0, rng), std::runtime_error);
    REQUIRE_THROWS_AS(make_blobs(2, 4, 3, 0.1, rng), std::invalid_argument);
    REQUIRE_THROWS_AS(make_blobs(10, 1, 3, 0.1, rng), std::invalid_argument);
}

TEST_CASE("inject_noise: zero ratio leaves the dataset unchanged") {
    Rng rng(86);
    Dataset ds = make_blobs(40, 4, 4, 0.2, rng);
    Dataset before = ds;
    inject_noise(ds, NoiseKind::symmetric, 0.0, rng);
    for (std::size_t i = 0; i < ds.size(); ++i)
        REQUIRE(ds.instances[i].noisy_label == before.instances[i].noisy_label);
}

TEST_CASE("inject_noise: symmetric realized rate concentrates around ratio") {
    Rng rng(87);
    Dataset ds = make_blobs(10000, 4, 4, 0.2, rng);
    inject_noise(ds, NoiseKind::symmetric, 0.4, rng);
    REQUIRE(noise_rate(ds) == Catch::Approx(0.4).margin(0.02));
    // true labels untouched (multiset preserved by immutability)
    std::map<std::size_t, int> counts;
    for (const auto& inst : ds.instances) counts[label_class(inst.true_label)]++;
    for (auto& [c, n] : counts) REQUIRE(n == 2500);
}

TEST_CASE("inject_noise: asymmetric flips land on the cyclic successor") {
    Rng rng(88);
    Dataset ds = make_blobs(5000, 4, 4, 0.2, rng);
    inject_noise(ds, NoiseKind::asymmetric, 0.4, rng);
    std::size_t flips = 0;
    for (const auto& inst : ds.instances) {
        const std::size_t t = label_class(inst.true_label);
        const std::size_t n = label_class(inst.noisy_label);
        if (n != t) {
            ++flips;
            REQUIRE(n == (t + 1) % 4);
        }
    }
    REQUIRE(flips / 5000.0 == Catch::Approx(0.4).margin(0.02));

    REQUIRE_THROWS_AS(inject_noise(ds, NoiseKind::asymmetric, 1.0, rng),
                      std::invalid_argument);
}

TEST_CASE("inject_noise: instance-dependent rate matches the truncated-Gaussian mean") {
    Rng rng(89);
    Dataset ds = make_blobs(10000, 6, 4, 0.25, rng);
    inject_noise(ds, NoiseKind::instance, 0.4, rng);
    // Normal(0.4, 0.1) barely feels the truncation: mean stays 0.4
    REQUIRE(noise_rate(ds) == Catch::Approx(0.4).margin(0.02));
    for (const auto& inst : ds.instances)
        REQUIRE(label_class(inst.true_label) < 4);
}

TEST_CASE("make_views: identity and dropout boundaries") {
    Rng rng(90);
    Vec x{1.0, -2.0, 3.0};
    auto [v1, v2] = make_views(x, rng, ViewParams{0.0, 0.0, 0.0});
    REQUIRE(v1 == x);
    REQUIRE(v2 == x);
    auto [w1, w2] = make_views(x, rng, ViewParams{0.0, 0.0, 1.0});
    REQUIRE(w2 == Vec{0.0, 0.0, 0.0});
}

TEST_CASE("make_views: noise is centered") {
    Rng rng(91);
    Vec x{0.5, -0.5};
    Vec sum(2, 0.0);
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        auto [v1, v2] = make_views(x, rng);
        sum[0] += v1[0] - x[0];
        sum[1] += v1[1] - x[1];
    }
    // 3 sigma of the mean of n draws at sigma = 0.05
    const double bound = 3.0 * 0.05 / std::sqrt(double(n));
    REQUIRE(std::abs(sum[0] / n) < bound);
    REQUIRE(std::abs(sum[1] / n) < bound);
}

TEST_CASE("assign_wrong_label: forced complement and uniformity") {
    Rng rng(92);
    REQUIRE(assign_wrong_label({1.0, 0.0}, rng) == Vec{0.0, 1.0});

    std::map<std::size_t, int> counts;
    Vec from = one_hot_label(10, 3);
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        Vec w = assign_wrong_label(from, rng);
        const std::size_t c = label_class(w);
        REQUIRE(c != 3);
        counts[c]++;
    }
    for (auto& [c, cnt] : counts)
        REQUIRE(cnt / double(n) == Catch::Approx(1.0 / 9.0).margin(0.01));

    REQUIRE_THROWS_AS(assign_wrong_label({1.0}, rng), std::invalid_argument);
}

TEST_CASE("dataset io: save/load round trip") {
    Rng rng(93);
    Dataset ds = make_blobs(30, 5, 3, 0.2, rng);
    inject_noise(ds, NoiseKind::symmetric, 0.3, rng);
    const std::string path = "test_dataset.txt";
    save_dataset(path, ds);
    Dataset back = load_dataset(path, 3);
    REQUIRE(back.size() == ds.size());
    REQUIRE(back.dim == ds.dim);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        REQUIRE(back.instances[i].id == ds.instances[i].id);
        REQUIRE(back.instances[i].x == ds.instances[i].x);
        REQUIRE(back.instances[i].noisy_label == ds.instances[i].noisy_label);
        REQUIRE(back.instances[i].true_label == ds.instances[i].true_label);
    }
    std::remove(path.c_str());
}
