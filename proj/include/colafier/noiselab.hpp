#pragma once

// Synthetic dataset generation, label-noise injection, dual-view
// augmentation, and random wrong-label assignment.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "colafier/numkit.hpp"

namespace colafier {

struct LabeledInstance {
    std::size_t id = 0;
    Vec x;
    Vec noisy_label;  // one-hot, rewritten by label update
    Vec true_label;   // one-hot, evaluation only, never mutated
};

struct Dataset {
    std::size_t n_classes = 0;
    std::size_t dim = 0;
    std::vector<LabeledInstance> instances;

    std::size_t size() const { return instances.size(); }
};

inline Vec one_hot_label(std::size_t n_c, std::size_t c) {
    Vec v(n_c, 0.0);
    v[c] = 1.0;
    return v;
}

inline std::size_t label_class(const Vec& label) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < label.size(); ++j)
        if (label[j] > label[best]) best = j;
    return best;
}

// n_c Gaussian clusters around unit-norm centers separated by at least
// 2*spread, per-cluster std = spread, balanced class counts, class
// assignment round-robin by instance id.
inline Dataset make_blobs(std::size_t n, std::size_t d, std::size_t n_c, double spread,
                          Rng& rng) {
    if (n < n_c) throw std::invalid_argument("make_blobs: need n >= n_c");
    if (d < 2) throw std::invalid_argument("make_blobs: need d >= 2");
    if (n_c < 1) throw std::invalid_argument("make_blobs: need at least one class");

    std::vector<Vec> centers;
    for (std::size_t c = 0; c < n_c; ++c) {
        bool placed = false;
        for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
            Vec cand(d);
            double norm = 0.0;
            for (double& v : cand) {
                v = rng.normal();
                norm += v * v;
            }
            norm = std::sqrt(norm);
            if (norm == 0.0) continue;
            for (double& v : cand) v /= norm;
            placed = true;
            for (const Vec& prev : centers) {
                double dist2 = 0.0;
                for (std::size_t j = 0; j < d; ++j)
                    dist2 += (cand[j] - prev[j]) * (cand[j] - prev[j]);
                if (std::sqrt(dist2) < 2.0 * spread) {
                    placed = false;
                    break;
                }
            }
            if (placed) centers.push_back(std::move(cand));
        }
        if (!placed) throw std::runtime_error("make_blobs: center separation infeasible");
    }

    Dataset ds;
    ds.n_classes = n_c;
    ds.dim = d;
    ds.instances.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i % n_c;
        LabeledInstance inst;
        inst.id = i;
        inst.x.resize(d);
        for (std::size_t j = 0; j < d; ++j) inst.x[j] = centers[c][j] + rng.normal(0.0, spread);
        inst.true_label = one_hot_label(n_c, c);
        inst.noisy_label = inst.true_label;
        ds.instances.push_back(std::move(inst));
    }
    return ds;
}

enum class NoiseKind { symmetric, asymmetric, instance };

inline NoiseKind noise_kind_from_string(const std::string& s) {
    if (s == "symmetric") return NoiseKind::symmetric;
    if (s == "asymmetric") return NoiseKind::asymmetric;
    if (s == "instance") return NoiseKind::instance;
    throw std::invalid_argument("unknown noise kind: " + s);
}

// symmetric: flip with probability `ratio` to a uniformly random other
// class. asymmetric: class c -> (c+1) mod N_c with probability `ratio`.
// instance: per-instance rate ~ Normal(ratio, 0.1^2) truncated to [0,1],
// destination drawn from softmax(x . W) over the non-true classes with a
// fresh random projection W (entries N(0, 1/d)) drawn per call.
inline void inject_noise(Dataset& ds, NoiseKind kind, double ratio, Rng& rng) {
    if (!(ratio >= 0.0 && ratio < 1.0)) throw std::invalid_argument("inject_noise: ratio outside [0,1)");
    const std::size_t n_c = ds.n_classes;
    if (n_c < 2) throw std::invalid_argument("inject_noise: need at least 2 classes");

    Matrix proj;
    if (kind == NoiseKind::instance) {
        proj = Matrix(ds.dim, n_c);
        const double scale = 1.0 / std::sqrt(static_cast<double>(ds.dim));
        for (double& v : proj.data) v = rng.normal(0.0, scale);
    }

    for (LabeledInstance& inst : ds.instances) {
        const std::size_t c = label_class(inst.true_label);
        switch (kind) {
            case NoiseKind::symmetric: {
                if (rng.uniform01() < ratio) {
                    std::size_t j = rng.uniform_index(n_c - 1);
                    if (j >= c) ++j;
                    inst.noisy_label = one_hot_label(n_c, j);
                }
                break;
            }
            case NoiseKind::asymmetric: {
                if (rng.uniform01() < ratio)
                    inst.noisy_label = one_hot_label(n_c, (c + 1) % n_c);
                break;
            }
            case NoiseKind::instance: {
                double rate;
                do {
                    rate = rng.normal(ratio, 0.1);
                } while (rate < 0.0 || rate > 1.0);
                if (rng.uniform01() < rate) {
                    Vec logits(n_c, 0.0);
                    for (std::size_t i = 0; i < ds.dim; ++i)
                        for (std::size_t j = 0; j < n_c; ++j)
                            logits[j] += inst.x[i] * proj(i, j);
                    double mx = -1e300;
                    for (std::size_t j = 0; j < n_c; ++j)
                        if (j != c) mx = std::max(mx, logits[j]);
                    Vec probs(n_c, 0.0);
                    double sum = 0.0;
                    for (std::size_t j = 0; j < n_c; ++j) {
                        if (j == c) continue;
                        probs[j] = std::exp(logits[j] - mx);
                        sum += probs[j];
                    }
                    double u = rng.uniform01() * sum;
                    std::size_t dest = c == 0 ? 1 : 0;
                    for (std::size_t j = 0; j < n_c; ++j) {
                        if (j == c) continue;
                        if (u < probs[j]) {
                            dest = j;
                            break;
                        }
                        u -= probs[j];
                    }
                    inst.noisy_label = one_hot_label(n_c, dest);
                }
                break;
            }
        }
    }
}

struct ViewParams {
    double sigma1 = 0.05;
    double sigma2 = 0.05;
    double p_drop = 0.1;  // coordinate dropout on the second (stronger) view
};

// v1 = x + noise(sigma1); v2 = x + noise(sigma2) with per-coordinate
// dropout. The second view is deliberately the stronger augmentation.
inline std::pair<Vec, Vec> make_views(const Vec& x, Rng& rng, const ViewParams& vp = {}) {
    Vec v1(x.size()), v2(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) v1[j] = x[j] + rng.normal(0.0, vp.sigma1);
    for (std::size_t j = 0; j < x.size(); ++j) v2[j] = x[j] + rng.normal(0.0, vp.sigma2);
    for (std::size_t j = 0; j < x.size(); ++j)
        if (rng.uniform01() < vp.p_drop) v2[j] = 0.0;
    return {std::move(v1), std::move(v2)};
}

// uniform over the classes other than argmax(noisy_label)
inline Vec assign_wrong_label(const Vec& noisy_label, Rng& rng) {
    const std::size_t n_c = noisy_label.size();
    if (n_c < 2) throw std::invalid_argument("assign_wrong_label: need at least 2 classes");
    const std::size_t c = label_class(noisy_label);
    std::size_t j = rng.uniform_index(n_c - 1);
    if (j >= c) ++j;
    return one_hot_label(n_c, j);
}

// One record per line: id, comma-separated features, noisy class index,
// true class index.
inline void save_dataset(const std::string& path, const Dataset& ds) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_dataset: cannot open " + path);
    char buf[64];
    for (const LabeledInstance& inst : ds.instances) {
        f << inst.id;
        for (double v : inst.x) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            f << ',' << buf;
        }
        f << ',' << label_class(inst.noisy_label) << ',' << label_class(inst.true_label)
          << '\n';
    }
    if (!f) throw std::runtime_error("save_dataset: write failed for " + path);
}

inline Dataset load_dataset(const std::string& path, std::size_t n_classes) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_dataset: cannot open " + path);
    Dataset ds;
    ds.n_classes = n_classes;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() < 4)
            throw std::runtime_error("load_dataset: malformed line " + std::to_string(line_no));
        LabeledInstance inst;
        inst.id = std::stoull(fields[0]);
        for (std::size_t j = 1; j + 2 < fields.size(); ++j)
            inst.x.push_back(std::stod(fields[j]));
        const std::size_t noisy = std::stoull(fields[fields.size() - 2]);
        const std::size_t truec = std::stoull(fields[fields.size() - 1]);
        if (noisy >= n_classes || truec >= n_classes)
            throw std::runtime_error("load_dataset: class index out of range at line " +
                                     std::to_string(line_no));
        inst.noisy_label = one_hot_label(n_classes, noisy);
        inst.true_label = one_hot_label(n_classes, truec);
        if (ds.dim == 0) ds.dim = inst.x.size();
        if (inst.x.size() != ds.dim)
            throw std::runtime_error("load_dataset: inconsistent width at line " +
                                     std::to_string(line_no));
        ds.instances.push_back(std::move(inst));
    }
    return ds;
}

inline double noise_rate(const Dataset& ds) {
    if (ds.instances.empty()) return 0.0;
    std::size_t bad = 0;
    for (const LabeledInstance& inst : ds.instances)
        if (label_class(inst.noisy_label) != label_class(inst.true_label)) ++bad;
    return static_cast<double>(bad) / static_cast<double>(ds.size());
}

}  // namespace colafier
