#pragma once

// Orchestrates the training loop: warm-up, the per-batch pipeline
// (views -> predictions -> LID -> weights -> losses -> optimizer steps ->
// update decisions), epoch-boundary label rewriting, and the epsilon
// schedules. Losses in an epoch always see the labels as they stood at
// the start of that epoch.

#include <array>
#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "colafier/core.hpp"
#include "colafier/lid.hpp"
#include "colafier/metrics.hpp"
#include "colafier/nn.hpp"
#include "colafier/noiselab.hpp"
#include "colafier/numkit.hpp"

namespace colafier {

struct TrainConfig {
    std::size_t total_epochs = 60;
    std::size_t warmup_epochs = 15;
    std::size_t batch_size = 128;
    double lr = 0.001;
    double weight_decay = 0.001;
    double eps_w_low = 0.001;
    double eps_w_high_start = 0.05;
    double eps_u_low = 0.001;
    double eps_u_high_start = 0.5;
    std::size_t ramp_epochs = 30;
    double eps_k = 0.1;
    double lambda_star = 0.5;
    double lambda_cons = 10.0;
    double gce_q = 0.7;
    std::size_t k_nn = 20;
    double mix_alpha = 1.0;
    std::uint64_t seed = 1;
    std::vector<std::size_t> hidden{64, 64};
    ViewParams views;

    void validate() const {
        if (total_epochs == 0) throw std::invalid_argument("config: total_epochs must be positive");
        if (warmup_epochs >= total_epochs)
            throw std::invalid_argument("config: warmup_epochs must be < total_epochs");
        for (double e : {eps_w_low, eps_w_high_start, eps_u_low, eps_u_high_start, eps_k}) {
            if (!(e >= 0.0 && e <= 1.0))
                throw std::invalid_argument("config: epsilon values must lie in [0,1]");
        }
        if (eps_w_low > eps_w_high_start || eps_u_low > eps_u_high_start)
            throw std::invalid_argument("config: eps_low must not exceed eps_high_start");
        if (batch_size < k_nn + 1)
            throw std::invalid_argument("config: batch_size must be >= k_nn + 1");
        if (ramp_epochs < 1) throw std::invalid_argument("config: ramp_epochs must be >= 1");
        if (!(gce_q > 0.0 && gce_q <= 1.0))
            throw std::invalid_argument("config: gce_q outside (0,1]");
        if (!(mix_alpha > 0.0)) throw std::invalid_argument("config: mix_alpha must be positive");
        if (!(lr > 0.0)) throw std::invalid_argument("config: lr must be positive");
        if (hidden.empty()) throw std::invalid_argument("config: hidden layers must be non-empty");
    }
};

struct EpochReport {
    std::size_t epoch = 0;  // 1-based
    double loss_clean = 0.0, loss_hard = 0.0, loss_noisy = 0.0;  // per-instance means
    double test_accuracy = 0.0;
    std::size_t updated = 0;
    double update_precision = kNoPrecision;
    double lid_auc_value = -1.0;  // -1 while no LID scores exist (warm-up, baselines)
    double eps_w_high = 0.0, eps_u_high = 0.0;
    std::int64_t wall_ms = 0;  // measured; the only nondeterministic field
};

enum class TrainMode { colafier, plain_ce, plain_gce };

inline TrainMode train_mode_from_string(const std::string& s) {
    if (s == "colafier") return TrainMode::colafier;
    if (s == "plain-ce") return TrainMode::plain_ce;
    if (s == "plain-gce") return TrainMode::plain_gce;
    throw std::invalid_argument("unknown mode: " + s);
}

// start + (1-start) * min(1, epoch/ramp); the ramp begins at the first
// post-warm-up epoch (epoch_since_warmup = 0).
inline double schedule_eps_high(double start, std::size_t epoch_since_warmup,
                                std::size_t ramp_epochs) {
    if (ramp_epochs < 1) throw std::invalid_argument("schedule_eps_high: ramp_epochs >= 1");
    const double frac = std::min(
        1.0, static_cast<double>(epoch_since_warmup) / static_cast<double>(ramp_epochs));
    return start + (1.0 - start) * frac;
}

namespace detail {

// Batches are a fresh seeded shuffle each epoch; a tail smaller than
// k_nn + 1 is merged into the previous batch so LID stays estimable and
// every instance is covered exactly once.
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t n,
                                                          std::size_t batch_size,
                                                          std::size_t k_nn, Rng& rng) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    if (batches.size() > 1 && batches.back().size() < k_nn + 1) {
        auto tail = std::move(batches.back());
        batches.pop_back();
        for (std::size_t i : tail) batches.back().push_back(i);
    }
    return batches;
}

struct EpochOutcome {
    double clean_sum = 0.0, hard_sum = 0.0, noisy_sum = 0.0;
    std::vector<LidReportRow> lid_rows;
    std::vector<UpdateDecision> decisions;   // pending, applied by the caller
    std::vector<std::size_t> decision_pos;   // dataset positions for the decisions
};

struct EpochOptions {
    bool lid_weighting = false;   // full pipeline with LID weights, mixing, updates
    WeightTriple forced{1.0, 0.0, 0.0};  // used when lid_weighting is off
};

inline EpochOutcome run_epoch_batches(Dataset& train_set, SubnetParams& ge, SubnetParams& ld,
                                      const TrainConfig& cfg, std::size_t epoch, Rng& rng,
                                      const EpochOptions& opt) {
    const std::size_t n_c = train_set.n_classes;
    EpochOutcome out;
    const double eps_w_high =
        opt.lid_weighting
            ? schedule_eps_high(cfg.eps_w_high_start, epoch - cfg.warmup_epochs - 1,
                                cfg.ramp_epochs)
            : 0.0;
    const double eps_u_high =
        opt.lid_weighting
            ? schedule_eps_high(cfg.eps_u_high_start, epoch - cfg.warmup_epochs - 1,
                                cfg.ramp_epochs)
            : 0.0;

    auto batches = make_batches(train_set.size(), cfg.batch_size, cfg.k_nn, rng);
    for (const std::vector<std::size_t>& idx : batches) {
        const std::size_t nb = idx.size();
        const double inv_nb = 1.0 / static_cast<double>(nb);

        // phase 1: views and wrong labels
        std::array<Matrix, 2> views{Matrix(nb, train_set.dim), Matrix(nb, train_set.dim)};
        Matrix labels(nb, n_c);
        std::vector<Vec> wrongs(nb);
        for (std::size_t i = 0; i < nb; ++i) {
            const LabeledInstance& inst = train_set.instances[idx[i]];
            auto [v1, v2] = make_views(inst.x, rng, cfg.views);
            views[0].set_row(i, v1);
            views[1].set_row(i, v2);
            labels.set_row(i, inst.noisy_label);
            wrongs[i] = assign_wrong_label(inst.noisy_label, rng);
        }

        // phase 2: predictions and LID^W scores
        BatchLossInputs lin;
        lin.lambda_star = cfg.lambda_star;
        lin.lambda_cons = cfg.lambda_cons;
        lin.gce_q = cfg.gce_q;
        lin.label.resize(nb);
        for (std::size_t i = 0; i < nb; ++i) lin.label[i] = labels.row(i);

        std::array<std::vector<ForwardTrace>, 2> tr_ge, tr_ld, tr_ldw, tr_ge_mix, tr_ld_mix;
        std::array<Matrix, 2> z_label;
        for (int k = 0; k < 2; ++k) {
            tr_ge[k].resize(nb);
            tr_ld[k].resize(nb);
            tr_ldw[k].resize(nb);
            lin.probs_ge[k].resize(nb);
            lin.probs_ld[k].resize(nb);
            lin.probs_ld_wrong[k].resize(nb);
            z_label[k] = Matrix(nb, ld.feature_dim());
            for (std::size_t i = 0; i < nb; ++i) {
                const Vec v = views[k].row(i);
                lin.probs_ge[k][i] = gen_forward(ge, v, tr_ge[k][i]);
                lin.probs_ld[k][i] = dis_forward(ld, v, lin.label[i], tr_ld[k][i]);
                z_label[k].set_row(i, tr_ld[k][i].z);
                lin.probs_ld_wrong[k][i] = dis_forward(ld, v, wrongs[i], tr_ldw[k][i]);
            }
        }

        const std::size_t k_eff = std::min(cfg.k_nn, nb - 1);
        std::array<LidScores, 2> lid_w;
        if (opt.lid_weighting) {
            for (int k = 0; k < 2; ++k) lid_w[k] = lid_weight_scores(z_label[k], k_eff);
        }

        // phase 3: weights, mixing, losses, optimizer steps
        lin.weights.assign(nb, opt.forced);
        if (opt.lid_weighting) {
            for (std::size_t i = 0; i < nb; ++i)
                lin.weights[i] =
                    assign_weights(lid_w[0].values[i], lid_w[1].values[i], lid_w[0].values,
                                   lid_w[1].values, cfg.eps_w_low, eps_w_high);
        }

        if (opt.lid_weighting) {
            lin.has_mix = true;
            for (int k = 0; k < 2; ++k) {
                MixResult mix = mix_samples(views[k], labels, cfg.mix_alpha, rng);
                lin.lambda[k] = mix.lambda;
                lin.partner[k] = mix.partner;
                tr_ge_mix[k].resize(nb);
                tr_ld_mix[k].resize(nb);
                lin.probs_ge_mix[k].resize(nb);
                lin.probs_ld_mix[k].resize(nb);
                for (std::size_t i = 0; i < nb; ++i) {
                    const Vec mv = mix.views.row(i);
                    lin.probs_ge_mix[k][i] = gen_forward(ge, mv, tr_ge_mix[k][i]);
                    lin.probs_ld_mix[k][i] =
                        dis_forward(ld, mv, mix.labels.row(i), tr_ld_mix[k][i]);
                }
            }
        }

        BatchLossTerms terms = total_losses(lin);
        out.clean_sum += terms.clean_ge + terms.clean_ld;
        out.hard_sum += terms.hard_ge + terms.hard_ld;
        out.noisy_sum += terms.noisy_ge + terms.noisy_ld;

        // phase 4 (decisions use the pre-step outputs computed above)
        if (opt.lid_weighting) {
            std::array<std::vector<Vec>, 2> probs_gd;  // LID-dis on pseudo pairs
            std::array<LidScores, 2> lid_u_label, lid_u_pseudo;
            std::array<Vec, 2> union_scores;
            const std::size_t k_union = std::min(cfg.k_nn, 2 * nb - 1);
            for (int k = 0; k < 2; ++k) {
                Matrix z_pseudo(nb, ld.feature_dim());
                probs_gd[k].resize(nb);
                ForwardTrace tmp;
                for (std::size_t i = 0; i < nb; ++i) {
                    probs_gd[k][i] = dis_forward(ld, views[k].row(i), lin.probs_ge[k][i], tmp);
                    z_pseudo.set_row(i, tmp.z);
                }
                auto [ls, ps] = lid_union_scores(z_label[k], z_pseudo, k_union);
                union_scores[k] = ls.values;
                union_scores[k].insert(union_scores[k].end(), ps.values.begin(),
                                       ps.values.end());
                lid_u_label[k] = std::move(ls);
                lid_u_pseudo[k] = std::move(ps);
            }
            for (std::size_t i = 0; i < nb; ++i) {
                std::array<double, 2> t_label{}, t_pseudo{};
                for (int k = 0; k < 2; ++k) {
                    const double delta_label =
                        prediction_delta(lin.probs_ge[k][i], lin.probs_ld[k][i]);
                    const double delta_pseudo =
                        prediction_delta(lin.probs_ge[k][i], probs_gd[k][i]);
                    TScores ts = t_scores(lid_u_label[k].values[i], lid_u_pseudo[k].values[i],
                                          union_scores[k], delta_label, delta_pseudo,
                                          cfg.eps_u_low, eps_u_high);
                    t_label[k] = ts.t_label;
                    t_pseudo[k] = ts.t_pseudo;
                }
                UpdateDecision d = decide_update(t_label, t_pseudo, lin.probs_ge[0][i],
                                                 lin.probs_ge[1][i], cfg.eps_k);
                if (d.update) {
                    d.id = train_set.instances[idx[i]].id;
                    out.decisions.push_back(std::move(d));
                    out.decision_pos.push_back(idx[i]);
                }
            }
            for (std::size_t i = 0; i < nb; ++i) {
                const LabeledInstance& inst = train_set.instances[idx[i]];
                out.lid_rows.push_back(
                    {epoch, inst.id, lid_w[0].values[i], lid_w[1].values[i],
                     label_class(inst.noisy_label) != label_class(inst.true_label)});
            }
        }

        // optimizer: one step per subnet on the batch-mean gradient
        SubnetGrads g_ge = make_zero_grads(ge);
        SubnetGrads g_ld = make_zero_grads(ld);
        for (int k = 0; k < 2; ++k) {
            for (std::size_t i = 0; i < nb; ++i) {
                if (!terms.g_probs_ge[k][i].empty())
                    accumulate_backward(ge, tr_ge[k][i], terms.g_probs_ge[k][i], g_ge, inv_nb);
                if (!terms.g_probs_ld[k][i].empty())
                    accumulate_backward(ld, tr_ld[k][i], terms.g_probs_ld[k][i], g_ld, inv_nb);
                if (!terms.g_probs_ld_wrong[k][i].empty())
                    accumulate_backward(ld, tr_ldw[k][i], terms.g_probs_ld_wrong[k][i], g_ld,
                                        inv_nb);
                if (lin.has_mix) {
                    if (!terms.g_probs_ge_mix[k][i].empty())
                        accumulate_backward(ge, tr_ge_mix[k][i], terms.g_probs_ge_mix[k][i],
                                            g_ge, inv_nb);
                    if (!terms.g_probs_ld_mix[k][i].empty())
                        accumulate_backward(ld, tr_ld_mix[k][i], terms.g_probs_ld_mix[k][i],
                                            g_ld, inv_nb);
                }
            }
        }
        adamw_step(ge, g_ge, cfg.lr, cfg.weight_decay);
        adamw_step(ld, g_ld, cfg.lr, cfg.weight_decay);
    }
    return out;
}

}  // namespace detail

// Warm-up epoch: plain CE for both subnets (with the wrong-label CE term
// on LID-dis), no weights, no mixing, no label updates.
inline EpochReport warmup_epoch(Dataset& train_set, SubnetParams& ge, SubnetParams& ld,
                                const TrainConfig& cfg, std::size_t epoch, Rng& rng,
                                const Dataset& test_set) {
    const auto t0 = std::chrono::steady_clock::now();
    detail::EpochOptions opt;
    opt.lid_weighting = false;
    opt.forced = WeightTriple{1.0, 0.0, 0.0};
    detail::EpochOutcome oc = detail::run_epoch_batches(train_set, ge, ld, cfg, epoch, rng, opt);
    EpochReport rep;
    rep.epoch = epoch;
    const double n = static_cast<double>(train_set.size());
    rep.loss_clean = oc.clean_sum / n;
    rep.loss_hard = oc.hard_sum / n;
    rep.loss_noisy = oc.noisy_sum / n;
    rep.test_accuracy = accuracy(ge, test_set);
    rep.eps_w_high = cfg.eps_w_high_start;
    rep.eps_u_high = cfg.eps_u_high_start;
    rep.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    return rep;
}

// Full post-warm-up epoch. Decisions are collected per batch from
// pre-step outputs and applied to the dataset only at the epoch end.
inline EpochReport train_epoch(Dataset& train_set, SubnetParams& ge, SubnetParams& ld,
                               const TrainConfig& cfg, std::size_t epoch, Rng& rng,
                               const Dataset& test_set,
                               std::vector<LidReportRow>* lid_sink = nullptr,
                               std::vector<UpdateEvent>* update_sink = nullptr) {
    if (epoch <= cfg.warmup_epochs)
        throw std::invalid_argument("train_epoch: epoch still inside warm-up");
    const auto t0 = std::chrono::steady_clock::now();
    detail::EpochOptions opt;
    opt.lid_weighting = true;
    detail::EpochOutcome oc = detail::run_epoch_batches(train_set, ge, ld, cfg, epoch, rng, opt);

    EpochReport rep;
    rep.epoch = epoch;
    const double n = static_cast<double>(train_set.size());
    rep.loss_clean = oc.clean_sum / n;
    rep.loss_hard = oc.hard_sum / n;
    rep.loss_noisy = oc.noisy_sum / n;
    rep.eps_w_high =
        schedule_eps_high(cfg.eps_w_high_start, epoch - cfg.warmup_epochs - 1, cfg.ramp_epochs);
    rep.eps_u_high =
        schedule_eps_high(cfg.eps_u_high_start, epoch - cfg.warmup_epochs - 1, cfg.ramp_epochs);

    // apply the collected decisions for the next epoch
    std::size_t correct = 0;
    for (std::size_t di = 0; di < oc.decisions.size(); ++di) {
        const UpdateDecision& d = oc.decisions[di];
        LabeledInstance& inst = train_set.instances[oc.decision_pos[di]];
        UpdateEvent ev;
        ev.epoch = epoch;
        ev.id = inst.id;
        ev.old_class = label_class(inst.noisy_label);
        ev.new_class = label_class(d.new_label);
        ev.correct = ev.new_class == label_class(inst.true_label);
        inst.noisy_label = d.new_label;
        if (ev.correct) ++correct;
        if (update_sink) update_sink->push_back(ev);
    }
    rep.updated = oc.decisions.size();
    if (rep.updated > 0)
        rep.update_precision = static_cast<double>(correct) / static_cast<double>(rep.updated);

    bool has_true = false, has_false = false;
    for (const LidReportRow& r : oc.lid_rows) (r.is_false_label ? has_false : has_true) = true;
    if (has_true && has_false) rep.lid_auc_value = lid_auc(oc.lid_rows);
    if (lid_sink)
        lid_sink->insert(lid_sink->end(), oc.lid_rows.begin(), oc.lid_rows.end());

    rep.test_accuracy = accuracy(ge, test_set);
    rep.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    return rep;
}

// Baseline epoch: the identical harness with weighting and updating
// disabled; CE or GCE on the current labels for every epoch.
inline EpochReport baseline_epoch(Dataset& train_set, SubnetParams& ge, SubnetParams& ld,
                                  const TrainConfig& cfg, std::size_t epoch, Rng& rng,
                                  const Dataset& test_set, TrainMode mode) {
    const auto t0 = std::chrono::steady_clock::now();
    detail::EpochOptions opt;
    opt.lid_weighting = false;
    opt.forced = mode == TrainMode::plain_gce ? WeightTriple{0.0, 1.0, 0.0}
                                              : WeightTriple{1.0, 0.0, 0.0};
    detail::EpochOutcome oc = detail::run_epoch_batches(train_set, ge, ld, cfg, epoch, rng, opt);
    EpochReport rep;
    rep.epoch = epoch;
    const double n = static_cast<double>(train_set.size());
    rep.loss_clean = oc.clean_sum / n;
    rep.loss_hard = oc.hard_sum / n;
    rep.loss_noisy = oc.noisy_sum / n;
    rep.test_accuracy = accuracy(ge, test_set);
    rep.eps_w_high = cfg.eps_w_high_start;
    rep.eps_u_high = cfg.eps_u_high_start;
    rep.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    return rep;
}

struct TrainResult {
    std::vector<EpochReport> reports;
    std::vector<LidReportRow> lid_rows;
    std::vector<UpdateEvent> update_log;
    SubnetParams ge, ld;
};

// Runs the whole schedule on train_set (mutating its noisy labels in
// colafier mode) and evaluates on test_set each epoch.
inline TrainResult train(Dataset& train_set, const Dataset& test_set, const TrainConfig& cfg,
                         TrainMode mode = TrainMode::colafier) {
    cfg.validate();
    if (train_set.size() < cfg.k_nn + 1)
        throw std::invalid_argument("train: dataset smaller than k_nn + 1");
    if (train_set.dim == 0 || train_set.n_classes < 2)
        throw std::invalid_argument("train: dataset must have features and >= 2 classes");

    Rng rng(cfg.seed);
    TrainResult res;
    res.ge = make_gen_subnet(train_set.dim, cfg.hidden, train_set.n_classes, rng);
    res.ld = make_dis_subnet(train_set.dim, cfg.hidden, train_set.n_classes, rng);

    for (std::size_t epoch = 1; epoch <= cfg.total_epochs; ++epoch) {
        EpochReport rep;
        if (mode != TrainMode::colafier) {
            rep = baseline_epoch(train_set, res.ge, res.ld, cfg, epoch, rng, test_set, mode);
        } else if (epoch <= cfg.warmup_epochs) {
            rep = warmup_epoch(train_set, res.ge, res.ld, cfg, epoch, rng, test_set);
        } else {
            rep = train_epoch(train_set, res.ge, res.ld, cfg, epoch, rng, test_set,
                              &res.lid_rows, &res.update_log);
        }
        res.reports.push_back(rep);
    }
    return res;
}

// average of the top three per-epoch test accuracies
inline double top3_average_accuracy(const std::vector<EpochReport>& reports) {
    Vec accs;
    for (const EpochReport& r : reports) accs.push_back(r.test_accuracy);
    std::sort(accs.begin(), accs.end(), std::greater<>());
    const std::size_t k = std::min<std::size_t>(3, accs.size());
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += accs[i];
    return k == 0 ? 0.0 : s / static_cast<double>(k);
}

}  // namespace colafier
