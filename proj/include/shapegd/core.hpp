#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace shapegd {

using NodeId = std::uint32_t;

enum class ClassLabel : std::uint8_t { Benign = 0, Malicious = 1 };

inline const char* to_string(ClassLabel l) {
    return l == ClassLabel::Malicious ? "malicious" : "benign";
}

// A feature vector observed at one node over one aggregation interval.
struct FeatureVector {
    std::vector<double> values;

    FeatureVector() = default;
    explicit FeatureVector(std::size_t dims) : values(dims, 0.0) {}
    explicit FeatureVector(std::vector<double> v) : values(std::move(v)) {}

    std::size_t dims() const { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
};

// A feature vector a local detector flagged as suspicious, tagged with its
// origin. true_label records ground truth for evaluation only; no detector
// input depends on it.
struct AlertFV {
    FeatureVector fv;
    NodeId node_id = 0;
    double timestamp = 0.0;
    ClassLabel true_label = ClassLabel::Benign;
};

// One item of a node-time FV stream before local detection.
struct StreamFV {
    FeatureVector fv;
    NodeId node_id = 0;
    double timestamp = 0.0;
    ClassLabel true_label = ClassLabel::Benign;
};

}  // namespace shapegd
