#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "shapegd/detector.hpp"
#include "shapegd/rng.hpp"

using namespace shapegd;

namespace {

FeatureVector fv1(double x) { return FeatureVector(std::vector<double>{x}); }

}  // namespace

TEST_CASE("threshold detector alerts strictly above the threshold") {
    ThresholdLD ld{0.0};
    CHECK(ld.classify(fv1(0.0)) == ClassLabel::Benign);
    CHECK(ld.classify(fv1(1e-12)) == ClassLabel::Malicious);
    CHECK(ld.classify(fv1(-3.0)) == ClassLabel::Benign);
    CHECK_THROWS_AS(ld.classify(FeatureVector(std::vector<double>{1.0, 2.0})),
                    std::invalid_argument);
}

TEST_CASE("linear detector applies dot product plus bias") {
    LinearLD ld{{1.0, -2.0}, 0.5};
    CHECK(ld.classify(FeatureVector(std::vector<double>{1.0, 1.0})) == ClassLabel::Benign);
    CHECK(ld.classify(FeatureVector(std::vector<double>{1.0, 0.5})) == ClassLabel::Malicious);
    CHECK(ld.classify(FeatureVector(std::vector<double>{0.5, 0.5})) == ClassLabel::Benign);
    CHECK(ld.projection(FeatureVector(std::vector<double>{2.0, 1.0})) == 0.0);
    CHECK_THROWS_AS(ld.classify(fv1(1.0)), std::invalid_argument);
    CHECK_THROWS_AS(classify(LocalDetector{ld}, FeatureVector{}), std::invalid_argument);
}

TEST_CASE("trained linear detector hits the target false-positive rate") {
    Rng rng(301);
    std::vector<FeatureVector> benign, malicious;
    for (int i = 0; i < 100000; ++i) benign.push_back(fv1(rng.normal(-1.0, 1.0)));
    for (int i = 0; i < 10000; ++i) malicious.push_back(fv1(rng.normal(1.0, 1.0)));

    LinearLD ld = train_linear_ld(benign, malicious, 0.15865525393145707);
    REQUIRE(ld.weights.size() == 1);
    CHECK(ld.weights[0] == Catch::Approx(2.0).margin(0.05));
    // The benign 84.13th percentile sits at 0, so the bias vanishes there.
    CHECK(std::abs(ld.bias) < 0.05);

    std::vector<FeatureVector> fresh_benign, fresh_malicious;
    for (int i = 0; i < 100000; ++i) fresh_benign.push_back(fv1(rng.normal(-1.0, 1.0)));
    for (int i = 0; i < 100000; ++i) fresh_malicious.push_back(fv1(rng.normal(1.0, 1.0)));
    OperatingPoint op = measure_operating_point(LocalDetector{ld}, fresh_benign, fresh_malicious);
    CHECK(op.fp_rate == Catch::Approx(0.15865525393145707).margin(0.01));
    CHECK(op.tp_rate == Catch::Approx(0.8413447460685429).margin(0.01));
}

TEST_CASE("training rejects bad inputs") {
    std::vector<FeatureVector> pts{fv1(0.5), fv1(-0.5)};
    CHECK_THROWS_AS(train_linear_ld({}, pts, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(train_linear_ld(pts, {}, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(train_linear_ld(pts, pts, 0.0), std::domain_error);
    CHECK_THROWS_AS(train_linear_ld(pts, pts, 1.0), std::domain_error);
    // Identical class means give a zero weight vector.
    CHECK_THROWS_AS(train_linear_ld(pts, pts, 0.1), std::runtime_error);
}

TEST_CASE("operating point of a fixed threshold on gaussian data") {
    Rng rng(302);
    std::vector<FeatureVector> benign, malicious;
    for (int i = 0; i < 100000; ++i) benign.push_back(fv1(rng.normal(-1.0, 1.0)));
    for (int i = 0; i < 100000; ++i) malicious.push_back(fv1(rng.normal(1.0, 1.0)));
    OperatingPoint op =
        measure_operating_point(LocalDetector{ThresholdLD{0.0}}, benign, malicious);
    CHECK(op.fp_rate == Catch::Approx(0.15865525393145707).margin(0.004));
    CHECK(op.tp_rate == Catch::Approx(0.8413447460685429).margin(0.004));
}

TEST_CASE("alert stream keeps order, metadata, and the truncated distribution") {
    Rng rng(303);
    std::vector<StreamFV> stream;
    const int n = 400000;
    stream.reserve(n);
    for (int i = 0; i < n; ++i) {
        stream.push_back(StreamFV{fv1(rng.normal(-1.0, 1.0)), static_cast<NodeId>(i % 97),
                                  static_cast<double>(i), ClassLabel::Benign});
    }
    auto alerts = run_ld_stream(LocalDetector{ThresholdLD{0.0}}, stream);

    const double p = 0.15865525393145707;
    double expect = n * p;
    double band = 6.0 * std::sqrt(n * p * (1.0 - p));
    CHECK(alerts.size() > expect - band);
    CHECK(alerts.size() < expect + band);

    double sum = 0.0;
    double prev_ts = -1.0;
    bool ordered = true, metadata_ok = true;
    for (const auto& a : alerts) {
        sum += a.fv[0];
        if (a.timestamp <= prev_ts) ordered = false;
        prev_ts = a.timestamp;
        auto idx = static_cast<int>(a.timestamp);
        if (a.node_id != static_cast<NodeId>(idx % 97)) metadata_ok = false;
        if (a.fv[0] <= 0.0) metadata_ok = false;
    }
    CHECK(ordered);
    CHECK(metadata_ok);
    // Mean of N(-1,1) conditioned on exceeding 0.
    CHECK(sum / static_cast<double>(alerts.size()) ==
          Catch::Approx(0.5251352761609811).margin(0.01));
}
