#pragma once

// Local Intrinsic Dimensionality estimation within a batch of enhanced
// representations. Produces the per-view scores used for loss weighting
// and the union-set scores used for label-update decisions.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "colafier/numkit.hpp"

namespace colafier {

inline constexpr double kLidRatioFloor = 1e-12;
inline constexpr double kLidScoreCap = 1e6;

struct LidScores {
    Vec values;         // one score per instance, batch order
    std::size_t k_nn = 0;
};

namespace detail {

// MLE estimate from the k smallest neighbor distances (self excluded).
// Ratios are clamped to [kLidRatioFloor, 1] before the log, so a
// duplicate neighbor gives a near-zero score and an all-equal distance
// profile gives the kLidScoreCap sentinel.
inline double lid_from_distances(const double* dist_row, std::size_t n,
                                 std::size_t self, std::size_t k_nn) {
    Vec neigh;
    neigh.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
        if (j != self) neigh.push_back(dist_row[j]);
    }
    std::partial_sort(neigh.begin(), neigh.begin() + static_cast<std::ptrdiff_t>(k_nn),
                      neigh.end());
    const double r_max = neigh[k_nn - 1];
    if (!(r_max > 0.0)) return kLidScoreCap;
    double log_sum = 0.0;
    for (std::size_t j = 0; j < k_nn; ++j) {
        const double ratio = std::clamp(neigh[j] / r_max, kLidRatioFloor, 1.0);
        log_sum += std::log(ratio);
    }
    const double mean_log = log_sum / static_cast<double>(k_nn);
    if (mean_log >= 0.0) return kLidScoreCap;
    return std::min(-1.0 / mean_log, kLidScoreCap);
}

}  // namespace detail

inline double lid_estimate(std::size_t index, const Matrix& reprs, std::size_t k_nn) {
    if (k_nn < 1) throw std::invalid_argument("lid_estimate: k_nn must be at least 1");
    if (reprs.rows < k_nn + 1) throw std::invalid_argument("lid_estimate: insufficient neighbors");
    if (index >= reprs.rows) throw std::invalid_argument("lid_estimate: index out of range");
    const std::size_t n = reprs.rows;
    const std::size_t d = reprs.cols;
    Vec dist(n, 0.0);
    const double* pi = reprs.data.data() + index * d;
    for (std::size_t j = 0; j < n; ++j) {
        if (j == index) continue;
        const double* pj = reprs.data.data() + j * d;
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double diff = pi[c] - pj[c];
            s += diff * diff;
        }
        dist[j] = std::sqrt(s);
    }
    return detail::lid_from_distances(dist.data(), n, index, k_nn);
}

// One score per instance, each estimated against the same-view batch.
inline LidScores lid_weight_scores(const Matrix& view_reprs, std::size_t k_nn) {
    if (k_nn < 1) throw std::invalid_argument("lid_weight_scores: k_nn must be at least 1");
    if (view_reprs.rows < k_nn + 1)
        throw std::invalid_argument("lid_weight_scores: insufficient neighbors");
    const Matrix dist = pairwise_distances(view_reprs);
    LidScores out;
    out.k_nn = k_nn;
    out.values.resize(view_reprs.rows);
    for (std::size_t i = 0; i < view_reprs.rows; ++i) {
        out.values[i] =
            detail::lid_from_distances(dist.data.data() + i * dist.cols, dist.cols, i, k_nn);
    }
    return out;
}

// Scores each instance's label-pair and pseudo-pair representation
// against the 2n-row union of the two sets. Only the exact self row is
// excluded from the neighbor search; an instance's twin stays in.
inline std::pair<LidScores, LidScores> lid_union_scores(const Matrix& label_reprs,
                                                        const Matrix& pseudo_reprs,
                                                        std::size_t k_nn) {
    if (label_reprs.rows != pseudo_reprs.rows || label_reprs.cols != pseudo_reprs.cols)
        throw std::invalid_argument("lid_union_scores: row-count mismatch");
    if (k_nn < 1) throw std::invalid_argument("lid_union_scores: k_nn must be at least 1");
    const std::size_t n = label_reprs.rows;
    if (2 * n < k_nn + 1)
        throw std::invalid_argument("lid_union_scores: insufficient neighbors");
    Matrix uni(2 * n, label_reprs.cols);
    std::copy(label_reprs.data.begin(), label_reprs.data.end(), uni.data.begin());
    std::copy(pseudo_reprs.data.begin(), pseudo_reprs.data.end(),
              uni.data.begin() + static_cast<std::ptrdiff_t>(n * label_reprs.cols));
    const Matrix dist = pairwise_distances(uni);
    LidScores labels, pseudos;
    labels.k_nn = pseudos.k_nn = k_nn;
    labels.values.resize(n);
    pseudos.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels.values[i] =
            detail::lid_from_distances(dist.data.data() + i * dist.cols, dist.cols, i, k_nn);
        pseudos.values[i] = detail::lid_from_distances(
            dist.data.data() + (n + i) * dist.cols, dist.cols, n + i, k_nn);
    }
    return {std::move(labels), std::move(pseudos)};
}

}  // namespace colafier
