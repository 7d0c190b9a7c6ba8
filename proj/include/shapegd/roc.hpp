#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace shapegd {

struct RocCurve {
    std::vector<std::pair<double, double>> points;  // (fp_rate, tp_rate), sorted by fp
    double auc = 0.0;
};

// Threshold-sweep ROC with trapezoidal AUC. Ties between positive and
// negative scores land on a diagonal segment, which the trapezoid credits as
// 1/2 — exactly the Mann-Whitney convention, so the two computations must
// agree; a mismatch beyond 1e-9 means a bug and throws.
inline RocCurve compute_roc(const std::vector<double>& scores_pos,
                            const std::vector<double>& scores_neg) {
    if (scores_pos.empty() || scores_neg.empty()) {
        throw std::invalid_argument("compute_roc: both score sets must be non-empty");
    }
    for (double s : scores_pos) {
        if (!std::isfinite(s)) throw std::invalid_argument("compute_roc: non-finite score");
    }
    for (double s : scores_neg) {
        if (!std::isfinite(s)) throw std::invalid_argument("compute_roc: non-finite score");
    }

    struct Tagged {
        double score;
        bool positive;
    };
    std::vector<Tagged> all;
    all.reserve(scores_pos.size() + scores_neg.size());
    for (double s : scores_pos) all.push_back({s, true});
    for (double s : scores_neg) all.push_back({s, false});
    std::sort(all.begin(), all.end(),
              [](const Tagged& a, const Tagged& b) { return a.score > b.score; });

    const double np = static_cast<double>(scores_pos.size());
    const double nn = static_cast<double>(scores_neg.size());

    RocCurve roc;
    roc.points.emplace_back(0.0, 0.0);
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    double auc = 0.0;
    while (i < all.size()) {
        // Consume the whole tie group before emitting a point.
        double s = all[i].score;
        while (i < all.size() && all[i].score == s) {
            if (all[i].positive) {
                ++tp;
            } else {
                ++fp;
            }
            ++i;
        }
        double x = static_cast<double>(fp) / nn;
        double y = static_cast<double>(tp) / np;
        const auto& prev = roc.points.back();
        auc += (x - prev.first) * (y + prev.second) * 0.5;
        roc.points.emplace_back(x, y);
    }
    roc.auc = auc;

    // Mann-Whitney cross-check via midranks.
    std::vector<double> combined;
    combined.reserve(all.size());
    for (const auto& t : all) combined.push_back(t.score);
    std::sort(combined.begin(), combined.end());
    double rank_sum_pos = 0.0;
    for (double s : scores_pos) {
        auto lo = std::lower_bound(combined.begin(), combined.end(), s);
        auto hi = std::upper_bound(combined.begin(), combined.end(), s);
        double first = static_cast<double>(lo - combined.begin()) + 1.0;
        double last = static_cast<double>(hi - combined.begin());
        rank_sum_pos += 0.5 * (first + last);
    }
    double u = rank_sum_pos - np * (np + 1.0) * 0.5;
    double mw_auc = u / (np * nn);
    if (std::abs(mw_auc - roc.auc) > 1e-9) {
        throw std::logic_error("compute_roc: trapezoid/Mann-Whitney AUC mismatch");
    }
    return roc;
}

}  // namespace shapegd
