#pragma once

#include <stdexcept>
#include <variant>
#include <vector>

#include "core.hpp"
#include "stats.hpp"

namespace shapegd {

// Local detectors are stateless: classify() is a pure function of the FV, so
// a node's verdict stream is exchangeable with any other node running the
// same detector.

// 1-D detector: Malicious iff the (single) feature value exceeds the
// threshold. Ties are Benign.
struct ThresholdLD {
    double threshold = 0.0;

    ClassLabel classify(const FeatureVector& fv) const {
        if (fv.dims() != 1) {
            throw std::invalid_argument("ThresholdLD: expected 1-D feature vector");
        }
        return fv[0] > threshold ? ClassLabel::Malicious : ClassLabel::Benign;
    }
};

// Linear detector: Malicious iff dot(weights, fv) + bias > 0. Ties are Benign.
struct LinearLD {
    std::vector<double> weights;
    double bias = 0.0;

    ClassLabel classify(const FeatureVector& fv) const {
        if (fv.dims() != weights.size()) {
            throw std::invalid_argument("LinearLD: dimension mismatch");
        }
        double s = bias;
        for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * fv[i];
        return s > 0.0 ? ClassLabel::Malicious : ClassLabel::Benign;
    }

    double projection(const FeatureVector& fv) const {
        double s = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * fv[i];
        return s;
    }
};

using LocalDetector = std::variant<ThresholdLD, LinearLD>;

inline ClassLabel classify(const LocalDetector& ld, const FeatureVector& fv) {
    if (fv.dims() == 0) {
        throw std::invalid_argument("classify: empty feature vector");
    }
    return std::visit([&](const auto& d) { return d.classify(fv); }, ld);
}

// Measured error rates of a detector on labeled samples.
struct OperatingPoint {
    double fp_rate = 0.0;  // P(alert | benign)
    double tp_rate = 0.0;  // P(alert | malicious)
};

// Fits a linear detector from labeled FVs: the weight vector is the class
// mean difference, and the bias is set from the empirical benign projection
// quantile so the training false-positive rate is target_fp (nearest-rank,
// strict > decision).
inline LinearLD train_linear_ld(const std::vector<FeatureVector>& benign,
                                const std::vector<FeatureVector>& malicious,
                                double target_fp) {
    if (benign.empty() || malicious.empty()) {
        throw std::invalid_argument("train_linear_ld: both classes need samples");
    }
    if (!(target_fp > 0.0 && target_fp < 1.0)) {
        throw std::domain_error("train_linear_ld: target_fp must be in (0, 1)");
    }
    const std::size_t dims = benign.front().dims();
    std::vector<double> w(dims, 0.0);
    for (const auto& fv : malicious) {
        if (fv.dims() != dims) throw std::invalid_argument("train_linear_ld: ragged FVs");
        for (std::size_t i = 0; i < dims; ++i) w[i] += fv[i];
    }
    for (auto& x : w) x /= static_cast<double>(malicious.size());
    std::vector<double> mb(dims, 0.0);
    for (const auto& fv : benign) {
        if (fv.dims() != dims) throw std::invalid_argument("train_linear_ld: ragged FVs");
        for (std::size_t i = 0; i < dims; ++i) mb[i] += fv[i];
    }
    for (std::size_t i = 0; i < dims; ++i) w[i] -= mb[i] / static_cast<double>(benign.size());

    bool all_zero = true;
    for (double x : w) {
        if (x != 0.0) {
            all_zero = false;
            break;
        }
    }
    if (all_zero) {
        throw std::runtime_error("train_linear_ld: identical class means, untrainable");
    }

    LinearLD ld{w, 0.0};
    std::vector<double> proj;
    proj.reserve(benign.size());
    for (const auto& fv : benign) proj.push_back(ld.projection(fv));
    ld.bias = -percentile_nearest_rank(std::move(proj), 1.0 - target_fp);
    return ld;
}

inline OperatingPoint measure_operating_point(const LocalDetector& ld,
                                              const std::vector<FeatureVector>& benign,
                                              const std::vector<FeatureVector>& malicious) {
    OperatingPoint op;
    std::size_t fp = 0, tp = 0;
    for (const auto& fv : benign) {
        if (classify(ld, fv) == ClassLabel::Malicious) ++fp;
    }
    for (const auto& fv : malicious) {
        if (classify(ld, fv) == ClassLabel::Malicious) ++tp;
    }
    if (!benign.empty()) op.fp_rate = static_cast<double>(fp) / benign.size();
    if (!malicious.empty()) op.tp_rate = static_cast<double>(tp) / malicious.size();
    return op;
}

// Runs the detector over a node-time FV stream and keeps the flagged entries.
inline std::vector<AlertFV> run_ld_stream(const LocalDetector& ld,
                                          const std::vector<StreamFV>& stream) {
    std::vector<AlertFV> alerts;
    for (const auto& item : stream) {
        if (classify(ld, item.fv) == ClassLabel::Malicious) {
            alerts.push_back(AlertFV{item.fv, item.node_id, item.timestamp, item.true_label});
        }
    }
    return alerts;
}

}  // namespace shapegd
