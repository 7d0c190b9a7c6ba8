#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"
#include "histogram.hpp"
#include "neighborhood.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace shapegd {

enum class GlobalDecision : std::uint8_t { Malicious, Benign, NoDecision };

inline const char* to_string(GlobalDecision d) {
    switch (d) {
        case GlobalDecision::Malicious: return "malicious";
        case GlobalDecision::Benign: return "benign";
        default: return "no-decision";
    }
}

struct GlobalVerdict {
    std::string neighborhood_id;
    GlobalDecision decision = GlobalDecision::NoDecision;
    double score = 0.0;
    std::uint64_t eligible_fv_count = 0;
};

// Core decision rule on accumulated histogram state: NoDecision below the FV
// eligibility threshold or with no alerts; otherwise Malicious iff the score
// strictly exceeds gamma.
inline GlobalVerdict shape_gd_classify_binned(const std::string& id,
                                              const BinAccumulator& acc,
                                              std::uint64_t total_fv_count,
                                              const ReferenceHistogram& ref,
                                              const GammaThreshold& gamma,
                                              std::uint64_t min_fvs) {
    GlobalVerdict v;
    v.neighborhood_id = id;
    v.eligible_fv_count = total_fv_count;
    if (total_fv_count < min_fvs || acc.alert_count == 0) {
        v.decision = GlobalDecision::NoDecision;
        return v;
    }
    ShapeScore s = shape_score(acc.to_histogram(), ref);
    v.score = s.value;
    v.decision = s.value > gamma.gamma ? GlobalDecision::Malicious : GlobalDecision::Benign;
    return v;
}

inline GlobalVerdict shape_gd_classify_histogram(const std::string& id,
                                                 const VectorHistogram& hist,
                                                 std::uint64_t alert_count,
                                                 std::uint64_t total_fv_count,
                                                 const ReferenceHistogram& ref,
                                                 const GammaThreshold& gamma,
                                                 std::uint64_t min_fvs) {
    GlobalVerdict v;
    v.neighborhood_id = id;
    v.eligible_fv_count = total_fv_count;
    if (total_fv_count < min_fvs || alert_count == 0 || !hist.valid) {
        v.decision = GlobalDecision::NoDecision;
        return v;
    }
    ShapeScore s = shape_score(hist, ref);
    v.score = s.value;
    v.decision = s.value > gamma.gamma ? GlobalDecision::Malicious : GlobalDecision::Benign;
    return v;
}

inline GlobalVerdict shape_gd_classify(const Neighborhood& nb, const ReferenceHistogram& ref,
                                       const GammaThreshold& gamma, std::uint64_t min_fvs) {
    if (nb.acc.edges != nullptr) {
        return shape_gd_classify_binned(nb.id, nb.acc, nb.total_fv_count, ref, gamma, min_fvs);
    }
    GlobalVerdict v;
    v.neighborhood_id = nb.id;
    v.eligible_fv_count = nb.total_fv_count;
    if (nb.total_fv_count < min_fvs || nb.alert_fvs.empty()) {
        v.decision = GlobalDecision::NoDecision;
        return v;
    }
    VectorHistogram h = build_histogram(nb.alert_fvs, ref.histogram.bin_edges);
    ShapeScore s = shape_score(h, ref);
    v.score = s.value;
    v.decision = s.value > gamma.gamma ? GlobalDecision::Malicious : GlobalDecision::Benign;
    return v;
}

// Count-based baseline: needs an estimate N-hat of how many FVs the
// neighborhood generated. The alert threshold is the configured percentile of
// Binomial(N-hat, ld_fp_rate), so it scales linearly with the size estimate.
struct CountGDConfig {
    std::uint64_t estimated_neighborhood_fv_count = 0;  // N-hat
    double ld_fp_rate = 0.06;
    double alert_threshold_percentile = 0.99;
};

inline std::uint64_t count_gd_threshold(const CountGDConfig& cfg) {
    if (cfg.estimated_neighborhood_fv_count == 0) {
        throw std::domain_error("count_gd_threshold: N-hat must be > 0");
    }
    return binomial_quantile(cfg.estimated_neighborhood_fv_count, cfg.ld_fp_rate,
                             cfg.alert_threshold_percentile);
}

inline GlobalVerdict count_gd_classify(std::uint64_t alert_count, const CountGDConfig& cfg,
                                       const std::string& id = "count") {
    std::uint64_t tau = count_gd_threshold(cfg);
    GlobalVerdict v;
    v.neighborhood_id = id;
    v.eligible_fv_count = cfg.estimated_neighborhood_fv_count;
    v.score = static_cast<double>(alert_count);
    v.decision = alert_count > tau ? GlobalDecision::Malicious : GlobalDecision::Benign;
    return v;
}

namespace detail {
inline std::uint64_t binomial_draw(Rng& rng, std::uint64_t n, double p) {
    std::uint64_t hits = 0;
    for (std::uint64_t i = 0; i < n; ++i) {
        if (rng.bernoulli(p)) ++hits;
    }
    return hits;
}
}  // namespace detail

// Empirical (FP, TP) of Count-GD when its size estimate is off by
// relative_error. Benign neighborhoods draw Binomial(N, fp) alerts; infected
// ones replace an infected_fraction of FVs with Binomial(., tp) alerts. The
// detector sees N-hat = N * (1 + relative_error).
struct CountSensitivity {
    double fp_rate = 0.0;
    double tp_rate = 0.0;
};

inline CountSensitivity count_gd_sensitivity(std::uint64_t true_fv_count,
                                             double relative_error, CountGDConfig cfg,
                                             double infected_fraction, double ld_tp_rate,
                                             std::size_t benign_runs,
                                             std::size_t malicious_runs,
                                             std::uint64_t seed) {
    if (relative_error <= -1.0) {
        throw std::domain_error("count_gd_sensitivity: relative_error must be > -1");
    }
    if (benign_runs < 100 || malicious_runs < 100) {
        throw std::invalid_argument("count_gd_sensitivity: need >= 100 runs per class");
    }
    double scaled = static_cast<double>(true_fv_count) * (1.0 + relative_error);
    cfg.estimated_neighborhood_fv_count = static_cast<std::uint64_t>(std::llround(scaled));
    const std::uint64_t tau = count_gd_threshold(cfg);

    const std::uint64_t n_infected = static_cast<std::uint64_t>(
        std::llround(infected_fraction * static_cast<double>(true_fv_count)));
    const std::uint64_t n_clean = true_fv_count - n_infected;

    std::size_t fp_hits = 0;
    for (std::size_t r = 0; r < benign_runs; ++r) {
        Rng rng(mix_seed(seed, 0xbe, r));
        std::uint64_t alerts = detail::binomial_draw(rng, true_fv_count, cfg.ld_fp_rate);
        if (alerts > tau) ++fp_hits;
    }
    std::size_t tp_hits = 0;
    for (std::size_t r = 0; r < malicious_runs; ++r) {
        Rng rng(mix_seed(seed, 0x3a, r));
        std::uint64_t alerts = detail::binomial_draw(rng, n_clean, cfg.ld_fp_rate) +
                               detail::binomial_draw(rng, n_infected, ld_tp_rate);
        if (alerts > tau) ++tp_hits;
    }
    CountSensitivity out;
    out.fp_rate = static_cast<double>(fp_hits) / static_cast<double>(benign_runs);
    out.tp_rate = static_cast<double>(tp_hits) / static_cast<double>(malicious_runs);
    return out;
}

// Clustering baseline: Euclidean distance between the neighborhood's mean
// alert-FV and the centroid of the reference-training alert-FVs.
inline double cluster_gd_score(const std::vector<double>& alert_fv_sum,
                               std::uint64_t alert_count,
                               const std::vector<double>& benign_centroid) {
    if (alert_count == 0) {
        throw std::invalid_argument("cluster_gd_score: no alerts in neighborhood");
    }
    if (alert_fv_sum.size() != benign_centroid.size()) {
        throw std::invalid_argument("cluster_gd_score: dimension mismatch");
    }
    double dist2 = 0.0;
    const double n = static_cast<double>(alert_count);
    for (std::size_t d = 0; d < alert_fv_sum.size(); ++d) {
        double diff = alert_fv_sum[d] / n - benign_centroid[d];
        dist2 += diff * diff;
    }
    return std::sqrt(dist2);
}

inline double cluster_gd_score(const Neighborhood& nb,
                               const std::vector<double>& benign_centroid) {
    if (!nb.alert_fv_sum.empty()) {
        return cluster_gd_score(nb.alert_fv_sum, nb.alert_count(), benign_centroid);
    }
    if (nb.alert_fvs.empty()) {
        throw std::invalid_argument("cluster_gd_score: no alerts in neighborhood");
    }
    std::vector<double> sum(benign_centroid.size(), 0.0);
    for (const auto& a : nb.alert_fvs) {
        if (a.fv.dims() != sum.size()) {
            throw std::invalid_argument("cluster_gd_score: dimension mismatch");
        }
        for (std::size_t d = 0; d < sum.size(); ++d) sum[d] += a.fv[d];
    }
    return cluster_gd_score(sum, nb.alert_fvs.size(), benign_centroid);
}

// Verdict log record:
//   V,<window_start>,<neighborhood_id>,<detector>,<decision>,<score>,<eligible_fv_count>
// NoDecision verdicts carry "na" in the score field; a numeric score there
// would read as a real measurement.
inline std::string verdict_record(double window_start, const GlobalVerdict& v,
                                  const std::string& detector) {
    char buf[160];
    char score[48];
    if (v.decision == GlobalDecision::NoDecision) {
        std::snprintf(score, sizeof(score), "na");
    } else {
        std::snprintf(score, sizeof(score), "%.17g", v.score);
    }
    std::snprintf(buf, sizeof(buf), "V,%.17g,%s,%s,%s,%s,%llu", window_start,
                  v.neighborhood_id.c_str(), detector.c_str(), to_string(v.decision), score,
                  static_cast<unsigned long long>(v.eligible_fv_count));
    return std::string(buf);
}

}  // namespace shapegd
