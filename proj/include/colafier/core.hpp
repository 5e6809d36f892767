#pragma once

// Loss-weight assignment from LID scores, the clean/hard/noisy loss
// families for both subnets, sample mixing, prediction deltas, t-scores,
// and the label-update decision.

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "colafier/numkit.hpp"

namespace colafier {

inline constexpr double kProbFloor = 1e-12;

// Per-instance loss weights on the probability simplex.
struct WeightTriple {
    double clean = 0.0;
    double hard = 0.0;
    double noisy = 0.0;
};

// w_k = clamp((q_high - lid)/(q_high - q_low), 0, 1), with the degenerate
// zero-spread case mapped to a binary split at q_low.
inline double view_weight(double lid, double q_low, double q_high) {
    if (q_high == q_low) return lid <= q_low ? 1.0 : 0.0;
    return std::clamp((q_high - lid) / (q_high - q_low), 0.0, 1.0);
}

// clean = min(w1,w2), hard = |w1-w2|, noisy = min(1-w1, 1-w2);
// sums to 1 for any (w1,w2) in [0,1]^2.
inline WeightTriple combine_view_weights(double w1, double w2) {
    WeightTriple t;
    t.clean = std::min(w1, w2);
    t.hard = std::abs(w1 - w2);
    t.noisy = std::min(1.0 - w1, 1.0 - w2);
    return t;
}

inline WeightTriple assign_weights(double lid_w_view1, double lid_w_view2,
                                   const Vec& batch_scores_v1, const Vec& batch_scores_v2,
                                   double eps_low, double eps_high) {
    if (!(eps_low >= 0.0 && eps_low <= eps_high && eps_high <= 1.0))
        throw std::invalid_argument("assign_weights: need 0 <= eps_low <= eps_high <= 1");
    const double w1 = view_weight(lid_w_view1, quantile(batch_scores_v1, eps_low),
                                  quantile(batch_scores_v1, eps_high));
    const double w2 = view_weight(lid_w_view2, quantile(batch_scores_v2, eps_low),
                                  quantile(batch_scores_v2, eps_high));
    return combine_view_weights(w1, w2);
}

struct LossValue {
    double value = 0.0;
    Vec grad;  // at p
};

// -sum_j y_j log p_j, p floored at kProbFloor inside the log
inline LossValue ce_loss(const Vec& y, const Vec& p) {
    if (y.size() != p.size()) throw std::invalid_argument("ce_loss: size mismatch");
    LossValue out;
    out.grad.assign(p.size(), 0.0);
    for (std::size_t j = 0; j < p.size(); ++j) {
        if (y[j] == 0.0) continue;
        const double pj = std::max(p[j], kProbFloor);
        out.value -= y[j] * std::log(pj);
        if (p[j] >= kProbFloor) out.grad[j] = -y[j] / pj;
    }
    return out;
}

// sum_j y_j (1 - p_j^q)/q, q in (0,1]. Approaches CE as q -> 0 and is
// the MAE loss at q = 1.
inline LossValue gce_loss(const Vec& y, const Vec& p, double q) {
    if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("gce_loss: q outside (0,1]");
    if (y.size() != p.size()) throw std::invalid_argument("gce_loss: size mismatch");
    LossValue out;
    out.grad.assign(p.size(), 0.0);
    for (std::size_t j = 0; j < p.size(); ++j) {
        if (y[j] == 0.0) continue;
        const double pj = std::max(p[j], kProbFloor);
        out.value += y[j] * (1.0 - std::pow(pj, q)) / q;
        if (p[j] >= kProbFloor) out.grad[j] = -y[j] * std::pow(pj, q - 1.0);
    }
    return out;
}

struct PairLoss {
    double value = 0.0;
    Vec grad1, grad2;
};

// 1 - cos(p1, p2), one view's term of the consistency loss
inline PairLoss consistency_loss(const Vec& p1, const Vec& p2) {
    if (p1.size() != p2.size()) throw std::invalid_argument("consistency_loss: size mismatch");
    double n1 = 0.0, n2 = 0.0, dot = 0.0;
    for (std::size_t j = 0; j < p1.size(); ++j) {
        n1 += p1[j] * p1[j];
        n2 += p2[j] * p2[j];
        dot += p1[j] * p2[j];
    }
    n1 = std::sqrt(n1);
    n2 = std::sqrt(n2);
    if (n1 == 0.0 || n2 == 0.0) throw std::invalid_argument("consistency_loss: zero vector");
    PairLoss out;
    const double cosv = dot / (n1 * n2);
    out.value = 1.0 - cosv;
    out.grad1.resize(p1.size());
    out.grad2.resize(p1.size());
    for (std::size_t j = 0; j < p1.size(); ++j) {
        out.grad1[j] = -(p2[j] / (n1 * n2) - dot * p1[j] / (n1 * n1 * n1 * n2));
        out.grad2[j] = -(p1[j] / (n1 * n2) - dot * p2[j] / (n2 * n2 * n2 * n1));
    }
    return out;
}

// sum_j |a_j - b_j|; in [0,2] for probability vectors
inline double prediction_delta(const Vec& p_gen, const Vec& p_dis) {
    if (p_gen.size() != p_dis.size())
        throw std::invalid_argument("prediction_delta: size mismatch");
    double d = 0.0;
    for (std::size_t j = 0; j < p_gen.size(); ++j) d += std::abs(p_gen[j] - p_dis[j]);
    return d;
}

enum class MixMode { vector, grid };

struct MixResult {
    Matrix views;
    Matrix labels;
    double lambda = 1.0;                 // fraction of the original retained
    std::vector<std::size_t> partner;    // r(i)
};

// Elementwise mixup with a fixed lambda and partner map. Label rows are
// always mixed as lambda*y_i + (1-lambda)*y_partner.
inline MixResult apply_mix(const Matrix& batch_views, const Matrix& batch_labels, double lambda,
                           std::vector<std::size_t> partner) {
    if (batch_views.rows != batch_labels.rows || partner.size() != batch_views.rows)
        throw std::invalid_argument("apply_mix: row mismatch");
    MixResult out;
    out.lambda = lambda;
    out.partner = std::move(partner);
    out.views = Matrix(batch_views.rows, batch_views.cols);
    out.labels = Matrix(batch_labels.rows, batch_labels.cols);
    for (std::size_t i = 0; i < batch_views.rows; ++i) {
        const std::size_t r = out.partner[i];
        for (std::size_t c = 0; c < batch_views.cols; ++c)
            out.views(i, c) = lambda * batch_views(i, c) + (1.0 - lambda) * batch_views(r, c);
        for (std::size_t c = 0; c < batch_labels.cols; ++c)
            out.labels(i, c) =
                lambda * batch_labels(i, c) + (1.0 - lambda) * batch_labels(r, c);
    }
    return out;
}

// One permutation and one Beta(alpha,alpha) lambda per call (per view).
// vector mode: elementwise mixup. grid mode: the views are treated as a
// grid_h x grid_w grid and a rectangle of area fraction 1-lambda is
// patched in from the partner; lambda is adjusted to the realized area.
inline MixResult mix_samples(const Matrix& batch_views, const Matrix& batch_labels,
                             double alpha, Rng& rng, MixMode mode = MixMode::vector,
                             std::size_t grid_h = 0, std::size_t grid_w = 0) {
    if (!(alpha > 0.0)) throw std::invalid_argument("mix_samples: alpha must be positive");
    if (batch_views.rows < 2) throw std::invalid_argument("mix_samples: batch size < 2");
    if (batch_views.rows != batch_labels.rows)
        throw std::invalid_argument("mix_samples: views/labels row mismatch");

    std::vector<std::size_t> partner(batch_views.rows);
    for (std::size_t i = 0; i < partner.size(); ++i) partner[i] = i;
    rng.shuffle(partner);
    const double lambda = rng.beta(alpha, alpha);

    if (mode == MixMode::vector) {
        return apply_mix(batch_views, batch_labels, lambda, std::move(partner));
    }

    if (grid_h * grid_w != batch_views.cols)
        throw std::invalid_argument("mix_samples: grid dims do not match view width");
    // CutMix-style rectangle: side lengths proportional to sqrt(1-lambda),
    // centered uniformly, clipped; lambda becomes the kept-area fraction.
    MixResult out;
    out.partner = std::move(partner);
    out.views = Matrix(batch_views.rows, batch_views.cols);
    out.labels = Matrix(batch_labels.rows, batch_labels.cols);
    const double cut = std::sqrt(1.0 - lambda);
    const std::size_t rh = static_cast<std::size_t>(std::round(cut * grid_h));
    const std::size_t rw = static_cast<std::size_t>(std::round(cut * grid_w));
    const std::size_t cy = rng.uniform_index(grid_h);
    const std::size_t cx = rng.uniform_index(grid_w);
    const std::size_t y0 = cy >= rh / 2 ? cy - rh / 2 : 0;
    const std::size_t x0 = cx >= rw / 2 ? cx - rw / 2 : 0;
    const std::size_t y1 = std::min(grid_h, y0 + rh);
    const std::size_t x1 = std::min(grid_w, x0 + rw);
    const std::size_t cut_area = (y1 - y0) * (x1 - x0);
    out.lambda = 1.0 - static_cast<double>(cut_area) / static_cast<double>(grid_h * grid_w);
    for (std::size_t i = 0; i < batch_views.rows; ++i) {
        const std::size_t r = out.partner[i];
        for (std::size_t y = 0; y < grid_h; ++y) {
            for (std::size_t x = 0; x < grid_w; ++x) {
                const bool inside = y >= y0 && y < y1 && x >= x0 && x < x1;
                const std::size_t c = y * grid_w + x;
                out.views(i, c) = inside ? batch_views(r, c) : batch_views(i, c);
            }
        }
        for (std::size_t c = 0; c < batch_labels.cols; ++c)
            out.labels(i, c) =
                out.lambda * batch_labels(i, c) + (1.0 - out.lambda) * batch_labels(r, c);
    }
    return out;
}

// All batch predictions needed to assemble the two training objectives.
// Views are indexed 0/1; inner vectors are batch order.
struct BatchLossInputs {
    std::vector<Vec> label;                          // current noisy labels
    std::vector<WeightTriple> weights;
    std::array<std::vector<Vec>, 2> probs_ge;        // plain views through LID-gen
    std::array<std::vector<Vec>, 2> probs_ld;        // (view, label) through LID-dis
    std::array<std::vector<Vec>, 2> probs_ld_wrong;  // (view, wrong label) through LID-dis
    std::array<std::vector<Vec>, 2> probs_ge_mix;    // mixed views through LID-gen
    std::array<std::vector<Vec>, 2> probs_ld_mix;    // (mixed view, mixed label) through LID-dis
    std::array<std::vector<std::size_t>, 2> partner;
    std::array<double, 2> lambda{1.0, 1.0};
    double lambda_star = 0.5;
    double lambda_cons = 10.0;
    double gce_q = 0.7;
    bool has_mix = false;
};

struct BatchLossTerms {
    double clean_ge = 0, hard_ge = 0, noisy_ge = 0;
    double clean_ld = 0, hard_ld = 0, noisy_ld = 0;
    double cons_ld = 0;  // unweighted consistency sum, for reporting
    double total_ge = 0, total_ld = 0;
    // gradients of (total_ge + total_ld) at every prediction vector
    std::array<std::vector<Vec>, 2> g_probs_ge, g_probs_ld, g_probs_ld_wrong;
    std::array<std::vector<Vec>, 2> g_probs_ge_mix, g_probs_ld_mix;
};

namespace detail {

inline void check_term_finite(double v, const char* term) {
    if (!std::isfinite(v))
        throw std::runtime_error(std::string("total_losses: non-finite term ") + term);
}

inline void axpy(Vec& acc, double a, const Vec& g) {
    if (acc.empty()) acc.assign(g.size(), 0.0);
    for (std::size_t j = 0; j < g.size(); ++j) acc[j] += a * g[j];
}

}  // namespace detail

// Batch sums of the clean/hard/noisy objectives for both subnets
// (instances contribute in order; no reordering, so results are
// reproducible bit for bit).
inline BatchLossTerms total_losses(const BatchLossInputs& in) {
    const std::size_t n = in.label.size();
    if (in.weights.size() != n) throw std::invalid_argument("total_losses: weights size mismatch");
    for (int k = 0; k < 2; ++k) {
        if (in.probs_ge[k].size() != n || in.probs_ld[k].size() != n ||
            in.probs_ld_wrong[k].size() != n)
            throw std::invalid_argument("total_losses: prediction set size mismatch");
        if (in.has_mix &&
            (in.probs_ge_mix[k].size() != n || in.probs_ld_mix[k].size() != n ||
             in.partner[k].size() != n))
            throw std::invalid_argument("total_losses: mixed set size mismatch");
    }

    BatchLossTerms out;
    for (int k = 0; k < 2; ++k) {
        auto init = [n](std::vector<Vec>& g) { g.assign(n, Vec()); };
        init(out.g_probs_ge[k]);
        init(out.g_probs_ld[k]);
        init(out.g_probs_ld_wrong[k]);
        init(out.g_probs_ge_mix[k]);
        init(out.g_probs_ld_mix[k]);
    }

    for (std::size_t i = 0; i < n; ++i) {
        const Vec& y = in.label[i];
        const WeightTriple& w = in.weights[i];
        if (!in.has_mix && w.noisy != 0.0)
            throw std::invalid_argument("total_losses: noisy weight without mixed predictions");

        for (int k = 0; k < 2; ++k) {
            // clean: CE on both subnets, wrong-label term on LID-dis
            if (w.clean != 0.0) {
                LossValue ce_ge = ce_loss(y, in.probs_ge[k][i]);
                out.clean_ge += w.clean * ce_ge.value;
                detail::axpy(out.g_probs_ge[k][i], w.clean, ce_ge.grad);

                LossValue ce_ld = ce_loss(y, in.probs_ld[k][i]);
                LossValue ce_ldw = ce_loss(y, in.probs_ld_wrong[k][i]);
                out.clean_ld += w.clean * (ce_ld.value + in.lambda_star * ce_ldw.value);
                detail::axpy(out.g_probs_ld[k][i], w.clean, ce_ld.grad);
                detail::axpy(out.g_probs_ld_wrong[k][i], w.clean * in.lambda_star, ce_ldw.grad);
            }
            // hard: same structure with GCE
            if (w.hard != 0.0) {
                LossValue gce_ge = gce_loss(y, in.probs_ge[k][i], in.gce_q);
                out.hard_ge += w.hard * gce_ge.value;
                detail::axpy(out.g_probs_ge[k][i], w.hard, gce_ge.grad);

                LossValue gce_ld = gce_loss(y, in.probs_ld[k][i], in.gce_q);
                LossValue gce_ldw = gce_loss(y, in.probs_ld_wrong[k][i], in.gce_q);
                out.hard_ld += w.hard * (gce_ld.value + in.lambda_star * gce_ldw.value);
                detail::axpy(out.g_probs_ld[k][i], w.hard, gce_ld.grad);
                detail::axpy(out.g_probs_ld_wrong[k][i], w.hard * in.lambda_star, gce_ldw.grad);
            }
            // noisy: mixed-sample CE against both original labels, plus the
            // consistency term on LID-dis
            if (w.noisy != 0.0) {
                const Vec& y_partner = in.label[in.partner[k][i]];
                const double lam = in.lambda[k];

                LossValue mix_ge_own = ce_loss(y, in.probs_ge_mix[k][i]);
                LossValue mix_ge_par = ce_loss(y_partner, in.probs_ge_mix[k][i]);
                out.noisy_ge +=
                    w.noisy * (lam * mix_ge_own.value + (1.0 - lam) * mix_ge_par.value);
                detail::axpy(out.g_probs_ge_mix[k][i], w.noisy * lam, mix_ge_own.grad);
                detail::axpy(out.g_probs_ge_mix[k][i], w.noisy * (1.0 - lam), mix_ge_par.grad);

                LossValue mix_ld_own = ce_loss(y, in.probs_ld_mix[k][i]);
                LossValue mix_ld_par = ce_loss(y_partner, in.probs_ld_mix[k][i]);
                out.noisy_ld +=
                    w.noisy * (lam * mix_ld_own.value + (1.0 - lam) * mix_ld_par.value);
                detail::axpy(out.g_probs_ld_mix[k][i], w.noisy * lam, mix_ld_own.grad);
                detail::axpy(out.g_probs_ld_mix[k][i], w.noisy * (1.0 - lam), mix_ld_par.grad);

                PairLoss cons = consistency_loss(in.probs_ld[k][i], in.probs_ld_wrong[k][i]);
                out.cons_ld += cons.value;
                out.noisy_ld += w.noisy * in.lambda_cons * cons.value;
                detail::axpy(out.g_probs_ld[k][i], w.noisy * in.lambda_cons, cons.grad1);
                detail::axpy(out.g_probs_ld_wrong[k][i], w.noisy * in.lambda_cons, cons.grad2);
            }
        }
    }

    detail::check_term_finite(out.clean_ge, "clean_ge");
    detail::check_term_finite(out.hard_ge, "hard_ge");
    detail::check_term_finite(out.noisy_ge, "noisy_ge");
    detail::check_term_finite(out.clean_ld, "clean_ld");
    detail::check_term_finite(out.hard_ld, "hard_ld");
    detail::check_term_finite(out.noisy_ld, "noisy_ld");
    out.total_ge = out.clean_ge + out.hard_ge + out.noisy_ge;
    out.total_ld = out.clean_ld + out.hard_ld + out.noisy_ld;
    return out;
}

// Quantile-normalized LID combined with the cross-subnet prediction gap.
struct TScores {
    double t_label = 0.0;
    double t_pseudo = 0.0;
};

inline TScores t_scores(double lid_u_label, double lid_u_pseudo, const Vec& union_scores,
                        double delta_label, double delta_pseudo, double eps_low,
                        double eps_high) {
    if (!(eps_low >= 0.0 && eps_low <= eps_high && eps_high <= 1.0))
        throw std::invalid_argument("t_scores: need 0 <= eps_low <= eps_high <= 1");
    const double q_low = quantile(union_scores, eps_low);
    const double q_high = quantile(union_scores, eps_high);
    auto normalize = [&](double lid) {
        if (q_high == q_low) return lid <= q_low ? 1.0 : 0.0;
        return (q_high - lid) / (q_high - q_low);
    };
    TScores out;
    out.t_label = std::clamp(normalize(lid_u_label) * (2.0 - delta_label) / 2.0, 0.0, 1.0);
    out.t_pseudo = std::clamp(normalize(lid_u_pseudo) * (2.0 - delta_pseudo) / 2.0, 0.0, 1.0);
    return out;
}

struct UpdateDecision {
    std::size_t id = 0;
    bool update = false;
    Vec new_label;                          // present iff update
    std::array<double, 2> t_label{0.0, 0.0};
    std::array<double, 2> t_pseudo{0.0, 0.0};
};

inline std::size_t argmax_index(const Vec& v) {
    return static_cast<std::size_t>(
        std::distance(v.begin(), std::max_element(v.begin(), v.end())));
}

// update iff the pseudo t beats the label t in both views, clears eps_k
// in both views, and the hardened pseudo-labels agree across views.
inline UpdateDecision decide_update(const std::array<double, 2>& t_label,
                                    const std::array<double, 2>& t_pseudo, const Vec& pseudo1,
                                    const Vec& pseudo2, double eps_k) {
    for (int k = 0; k < 2; ++k) {
        if (!(t_label[k] >= 0.0 && t_label[k] <= 1.0 && t_pseudo[k] >= 0.0 &&
              t_pseudo[k] <= 1.0))
            throw std::invalid_argument("decide_update: t values outside [0,1]");
    }
    UpdateDecision d;
    d.t_label = t_label;
    d.t_pseudo = t_pseudo;
    const std::size_t a1 = argmax_index(pseudo1);
    const std::size_t a2 = argmax_index(pseudo2);
    d.update = t_pseudo[0] > t_label[0] && t_pseudo[1] > t_label[1] && t_pseudo[0] > eps_k &&
               t_pseudo[1] > eps_k && a1 == a2;
    if (d.update) {
        d.new_label.assign(pseudo1.size(), 0.0);
        d.new_label[a1] = 1.0;
    }
    return d;
}

}  // namespace colafier
