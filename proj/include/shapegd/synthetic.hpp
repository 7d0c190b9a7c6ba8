#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"
#include "detector.hpp"
#include "rng.hpp"

namespace shapegd {

// 1-D two-Gaussian world: the weakest interesting detector setting, where a
// threshold test at 0 is the best local rule.
struct GaussianToyModel {
    double benign_mean = -1.0;
    double malicious_mean = 1.0;
    double std_dev = 1.0;
};

inline double sample_toy(const GaussianToyModel& model, ClassLabel label, Rng& rng) {
    if (!(model.std_dev > 0.0)) throw std::domain_error("GaussianToyModel: std_dev must be > 0");
    double mean = label == ClassLabel::Malicious ? model.malicious_mean : model.benign_mean;
    return rng.normal(mean, model.std_dev);
}

inline double sample_toy(const GaussianToyModel& model, ClassLabel label, std::uint64_t seed) {
    Rng rng(seed);
    return sample_toy(model, label, rng);
}

// L-dimensional class-conditional model with independent per-coordinate
// Gaussians. The malicious mean sits at benign_mean + separation * direction
// for a unit direction vector, so one scalar controls class distance.
struct FVClassModel {
    std::size_t dims = 10;
    std::vector<double> benign_mean_vector;
    std::vector<double> malicious_mean_vector;
    std::vector<double> benign_scale;     // per-dimension std dev
    std::vector<double> malicious_scale;  // per-dimension std dev
    double separation = 0.0;

    void validate() const {
        if (dims == 0) throw std::domain_error("FVClassModel: dims must be > 0");
        if (benign_mean_vector.size() != dims || malicious_mean_vector.size() != dims ||
            benign_scale.size() != dims || malicious_scale.size() != dims) {
            throw std::domain_error("FVClassModel: vector sizes must equal dims");
        }
        for (std::size_t i = 0; i < dims; ++i) {
            if (!(benign_scale[i] > 0.0) || !(malicious_scale[i] > 0.0)) {
                throw std::domain_error("FVClassModel: scales must be > 0");
            }
        }
    }
};

// Default scale of the malicious class, 0.2713: at the (6% FP, 92.4% TP)
// operating point of the mean-difference linear detector, this value makes
// the alert-conditional class means coincide, so the two alert populations
// differ in spread, not location.
constexpr double kDefaultMaliciousScale = 0.2713;

// Moves the malicious mean along the existing benign->malicious direction so
// that |malicious_mean - benign_mean| = separation. Requires a nonzero
// direction unless the model carries the canonical one.
inline void set_separation(FVClassModel& model, double separation) {
    if (separation < 0.0) throw std::domain_error("set_separation: separation must be >= 0");
    double norm2 = 0.0;
    for (std::size_t i = 0; i < model.dims; ++i) {
        double d = model.malicious_mean_vector[i] - model.benign_mean_vector[i];
        norm2 += d * d;
    }
    double norm = std::sqrt(norm2);
    if (norm == 0.0) {
        // Canonical direction: equal weight on every coordinate.
        double u = 1.0 / std::sqrt(static_cast<double>(model.dims));
        for (std::size_t i = 0; i < model.dims; ++i) {
            model.malicious_mean_vector[i] = model.benign_mean_vector[i] + separation * u;
        }
    } else {
        for (std::size_t i = 0; i < model.dims; ++i) {
            double d = model.malicious_mean_vector[i] - model.benign_mean_vector[i];
            model.malicious_mean_vector[i] = model.benign_mean_vector[i] + separation * d / norm;
        }
    }
    model.separation = separation;
}

inline FVClassModel make_fv_model(std::size_t dims, double benign_scale,
                                  double malicious_scale, double separation) {
    FVClassModel m;
    m.dims = dims;
    m.benign_mean_vector.assign(dims, 0.0);
    m.malicious_mean_vector.assign(dims, 0.0);
    m.benign_scale.assign(dims, benign_scale);
    m.malicious_scale.assign(dims, malicious_scale);
    set_separation(m, separation);
    m.validate();
    return m;
}

inline void sample_fv_into(const FVClassModel& model, ClassLabel label, Rng& rng,
                           FeatureVector& out) {
    const bool mal = label == ClassLabel::Malicious;
    const std::vector<double>& mean = mal ? model.malicious_mean_vector : model.benign_mean_vector;
    const std::vector<double>& scale = mal ? model.malicious_scale : model.benign_scale;
    out.values.resize(model.dims);
    for (std::size_t i = 0; i < model.dims; ++i) {
        out.values[i] = mean[i] + scale[i] * rng.normal();
    }
}

inline FeatureVector sample_fv(const FVClassModel& model, ClassLabel label, Rng& rng) {
    FeatureVector fv;
    sample_fv_into(model, label, rng, fv);
    return fv;
}

inline FeatureVector sample_fv(const FVClassModel& model, ClassLabel label, std::uint64_t seed) {
    Rng rng(seed);
    return sample_fv(model, label, rng);
}

// A node's FV emission descriptor.
struct FVStream {
    NodeId node_id = 0;
    ClassLabel label = ClassLabel::Benign;
    double rate = 1.0;  // FVs per second
};

struct CalibrationResult {
    FVClassModel model;
    LinearLD ld;
    OperatingPoint measured;
};

namespace detail {
inline std::vector<FeatureVector> draw_class(const FVClassModel& model, ClassLabel label,
                                             std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<FeatureVector> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(sample_fv(model, label, rng));
    return out;
}
}  // namespace detail

// Bisection on the separation scalar (bracket [0, 20] in units of benign
// scale) until a linear detector trained at target_fp measures target_tp.
// Training and evaluation use fixed seeds across iterations, so measured TP
// is monotone in separation and bisection converges cleanly.
inline CalibrationResult calibrate_separation(FVClassModel model, double target_fp,
                                              double target_tp, std::uint64_t seed,
                                              std::size_t samples_per_class = 100000) {
    if (!(target_fp > 0.0 && target_fp < target_tp && target_tp < 1.0)) {
        throw std::domain_error(
            "calibrate_separation: need 0 < target_fp < target_tp < 1");
    }
    model.validate();
    const std::uint64_t train_b = mix_seed(seed, seed_stream::model_calibration, 1);
    const std::uint64_t train_m = mix_seed(seed, seed_stream::model_calibration, 2);
    const std::uint64_t eval_b = mix_seed(seed, seed_stream::model_calibration, 3);
    const std::uint64_t eval_m = mix_seed(seed, seed_stream::model_calibration, 4);

    auto measure = [&](double sep) {
        set_separation(model, sep);
        auto ben_train = detail::draw_class(model, ClassLabel::Benign, samples_per_class, train_b);
        auto mal_train = detail::draw_class(model, ClassLabel::Malicious, samples_per_class, train_m);
        LinearLD ld = train_linear_ld(ben_train, mal_train, target_fp);
        auto ben_eval = detail::draw_class(model, ClassLabel::Benign, samples_per_class, eval_b);
        auto mal_eval = detail::draw_class(model, ClassLabel::Malicious, samples_per_class, eval_m);
        OperatingPoint op = measure_operating_point(LocalDetector{ld}, ben_eval, mal_eval);
        return std::pair<LinearLD, OperatingPoint>(std::move(ld), op);
    };

    double lo = 0.0, hi = 20.0;
    auto at_hi = measure(hi);
    if (at_hi.second.tp_rate < target_tp) {
        throw std::runtime_error(
            "calibrate_separation: target TP unreachable within separation bracket");
    }
    for (int iter = 0; iter < 50 && (hi - lo) > 1e-9; ++iter) {
        double mid = 0.5 * (lo + hi);
        auto m = measure(mid);
        if (m.second.tp_rate < target_tp) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    auto final_fit = measure(hi);
    CalibrationResult result;
    result.model = model;
    result.ld = std::move(final_fit.first);
    result.measured = final_fit.second;
    return result;
}

// FV replay files: one FV per line,
//   node_id,timestamp_seconds,label,v1,...,vL
inline void save_fv_stream(const std::string& path, const std::vector<StreamFV>& stream) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_fv_stream: cannot open " + path);
    char buf[64];
    for (const auto& item : stream) {
        out << item.node_id << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", item.timestamp);
        out << buf << ',' << to_string(item.true_label);
        for (double v : item.fv.values) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << ',' << buf;
        }
        out << '\n';
    }
}

inline std::vector<StreamFV> load_fv_stream(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_fv_stream: cannot open " + path);
    std::vector<StreamFV> stream;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string field;
        StreamFV item;
        auto fail = [&](const char* what) {
            throw std::runtime_error("load_fv_stream: " + path + ":" +
                                     std::to_string(lineno) + ": " + what);
        };
        if (!std::getline(ss, field, ',')) fail("missing node_id");
        item.node_id = static_cast<NodeId>(std::stoul(field));
        if (!std::getline(ss, field, ',')) fail("missing timestamp");
        item.timestamp = std::stod(field);
        if (!std::getline(ss, field, ',')) fail("missing label");
        if (field == "malicious") {
            item.true_label = ClassLabel::Malicious;
        } else if (field == "benign") {
            item.true_label = ClassLabel::Benign;
        } else {
            fail("unknown label");
        }
        while (std::getline(ss, field, ',')) {
            item.fv.values.push_back(std::stod(field));
        }
        if (item.fv.values.empty()) fail("no feature values");
        stream.push_back(std::move(item));
    }
    return stream;
}

}  // namespace shapegd
