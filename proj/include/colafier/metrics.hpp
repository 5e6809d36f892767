#pragma once

// Evaluation: test accuracy, LID true/false-label separation, and
// label-purification statistics.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "colafier/nn.hpp"
#include "colafier/noiselab.hpp"

namespace colafier {

// precision sentinel when no updates happened
inline constexpr double kNoPrecision = -1.0;

struct LidReportRow {
    std::size_t epoch = 0;
    std::size_t id = 0;
    double lid_v1 = 0.0;
    double lid_v2 = 0.0;
    bool is_false_label = false;  // noisy != true at time of scoring
};

struct UpdateEvent {
    std::size_t epoch = 0;
    std::size_t id = 0;
    std::size_t old_class = 0;
    std::size_t new_class = 0;
    bool correct = false;  // new_class == true class
};

// fraction of argmax(gen_forward(x)) == argmax(true_label), on clean
// un-augmented features
inline double accuracy(const SubnetParams& params_ge, const Dataset& test_set) {
    if (test_set.instances.empty()) throw std::invalid_argument("accuracy: empty test set");
    std::size_t hits = 0;
    ForwardTrace tr;
    for (const LabeledInstance& inst : test_set.instances) {
        gen_forward(params_ge, inst.x, tr);
        if (label_class(tr.probs) == label_class(inst.true_label)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(test_set.size());
}

// ROC AUC for classifying is_false_label by the mean of the two views'
// LID scores (higher score predicts false). Rank-based with midrank ties.
inline double lid_auc(const std::vector<LidReportRow>& report) {
    std::size_t n_pos = 0, n_neg = 0;
    std::vector<std::pair<double, bool>> scored;
    scored.reserve(report.size());
    for (const LidReportRow& r : report) {
        scored.push_back({0.5 * (r.lid_v1 + r.lid_v2), r.is_false_label});
        (r.is_false_label ? n_pos : n_neg)++;
    }
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("lid_auc: degenerate report");
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < scored.size()) {
        std::size_t j = i;
        while (j < scored.size() && scored[j].first == scored[i].first) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (std::size_t k = i; k < j; ++k)
            if (scored[k].second) pos_rank_sum += midrank;
        i = j;
    }
    const double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) *
                                        static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

struct PurificationStats {
    std::size_t updated_count = 0;
    double update_precision = kNoPrecision;
    double residual_noise_rate = 0.0;
};

inline PurificationStats purification_stats(const Dataset& ds,
                                            const std::vector<UpdateEvent>& update_log) {
    PurificationStats s;
    s.updated_count = update_log.size();
    if (!update_log.empty()) {
        std::size_t good = 0;
        for (const UpdateEvent& e : update_log)
            if (e.correct) ++good;
        s.update_precision = static_cast<double>(good) / static_cast<double>(update_log.size());
    }
    s.residual_noise_rate = noise_rate(ds);
    return s;
}

// Export: one `epoch,id,lid_v1,lid_v2,is_false` row per instance.
inline void save_lid_report(const std::string& path, const std::vector<LidReportRow>& rows) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_lid_report: cannot open " + path);
    f << "epoch,id,lid_v1,lid_v2,is_false\n";
    char buf[128];
    for (const LidReportRow& r : rows) {
        std::snprintf(buf, sizeof buf, "%zu,%zu,%.9g,%.9g,%d\n", r.epoch, r.id, r.lid_v1,
                      r.lid_v2, r.is_false_label ? 1 : 0);
        f << buf;
    }
    if (!f) throw std::runtime_error("save_lid_report: write failed for " + path);
}

}  // namespace colafier
