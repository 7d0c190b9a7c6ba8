#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "shapegd/synthetic.hpp"

using namespace shapegd;

namespace {

double mean_norm(const FVClassModel& m) {
    double n2 = 0.0;
    for (std::size_t i = 0; i < m.dims; ++i) {
        double d = m.malicious_mean_vector[i] - m.benign_mean_vector[i];
        n2 += d * d;
    }
    return std::sqrt(n2);
}

std::string temp_path(const char* name) {
    return std::string("/tmp/shapegd_test_") + name;
}

}  // namespace

TEST_CASE("toy sampler is a pure function of its seed") {
    GaussianToyModel model;
    double a = sample_toy(model, ClassLabel::Benign, 99);
    double b = sample_toy(model, ClassLabel::Benign, 99);
    double c = sample_toy(model, ClassLabel::Malicious, 99);
    CHECK(a == b);
    CHECK(a != c);

    GaussianToyModel bad;
    bad.std_dev = 0.0;
    Rng rng(1);
    CHECK_THROWS_AS(sample_toy(bad, ClassLabel::Benign, rng), std::domain_error);
}

TEST_CASE("toy benign tail above zero matches the gaussian cdf") {
    GaussianToyModel model;
    Rng rng(401);
    const int n = 1000000;
    int above = 0;
    for (int i = 0; i < n; ++i) {
        if (sample_toy(model, ClassLabel::Benign, rng) > 0.0) ++above;
    }
    CHECK(above / static_cast<double>(n) ==
          Catch::Approx(0.15865525393145707).margin(0.0015));
}

TEST_CASE("fv model validation rejects inconsistent shapes") {
    FVClassModel m = make_fv_model(3, 1.0, 0.5, 1.0);
    CHECK_NOTHROW(m.validate());

    FVClassModel zero_dims = m;
    zero_dims.dims = 0;
    CHECK_THROWS_AS(zero_dims.validate(), std::domain_error);

    FVClassModel ragged = m;
    ragged.benign_scale.pop_back();
    CHECK_THROWS_AS(ragged.validate(), std::domain_error);

    FVClassModel bad_scale = m;
    bad_scale.malicious_scale[1] = 0.0;
    CHECK_THROWS_AS(bad_scale.validate(), std::domain_error);
}

TEST_CASE("set_separation rescales the class mean distance exactly") {
    FVClassModel m = make_fv_model(10, 1.0, kDefaultMaliciousScale, 1.0);
    set_separation(m, 1.9434);
    CHECK(mean_norm(m) == Catch::Approx(1.9434).margin(1e-12));
    CHECK(m.separation == 1.9434);

    set_separation(m, 0.25);
    CHECK(mean_norm(m) == Catch::Approx(0.25).margin(1e-12));

    FVClassModel flat = make_fv_model(4, 1.0, 1.0, 0.0);
    set_separation(flat, 2.0);
    for (std::size_t i = 0; i < flat.dims; ++i) {
        CHECK(flat.malicious_mean_vector[i] == Catch::Approx(1.0).margin(1e-12));
    }
    CHECK(mean_norm(flat) == Catch::Approx(2.0).margin(1e-12));

    CHECK_THROWS_AS(set_separation(m, -0.1), std::domain_error);
}

TEST_CASE("fv sampler is deterministic per seed") {
    FVClassModel m = make_fv_model(10, 1.0, kDefaultMaliciousScale, 1.9434);
    FeatureVector a = sample_fv(m, ClassLabel::Malicious, 1234);
    FeatureVector b = sample_fv(m, ClassLabel::Malicious, 1234);
    REQUIRE(a.dims() == 10);
    CHECK(a.values == b.values);
    FeatureVector c = sample_fv(m, ClassLabel::Malicious, 1235);
    CHECK(a.values != c.values);
}

TEST_CASE("separation calibration hits the requested operating point") {
    FVClassModel m = make_fv_model(10, 1.0, kDefaultMaliciousScale, 0.0);
    CalibrationResult r = calibrate_separation(m, 0.06, 0.924, 7, 20000);
    CHECK(r.measured.fp_rate == Catch::Approx(0.06).margin(0.01));
    CHECK(r.measured.tp_rate == Catch::Approx(0.924).margin(0.01));
    CHECK(r.measured.tp_rate >= 0.924);
    CHECK(r.model.separation > 0.0);

    CalibrationResult again = calibrate_separation(m, 0.06, 0.924, 7, 20000);
    CHECK(again.model.separation == r.model.separation);
    CHECK(again.ld.weights == r.ld.weights);
    CHECK(again.ld.bias == r.ld.bias);
}

TEST_CASE("measured tp grows with separation under common seeds") {
    double prev_tp = -1.0;
    for (double sep : {0.5, 1.0, 2.0, 3.0}) {
        FVClassModel m = make_fv_model(10, 1.0, kDefaultMaliciousScale, sep);
        auto ben_train = detail::draw_class(m, ClassLabel::Benign, 20000, 11);
        auto mal_train = detail::draw_class(m, ClassLabel::Malicious, 20000, 12);
        LinearLD ld = train_linear_ld(ben_train, mal_train, 0.06);
        auto ben_eval = detail::draw_class(m, ClassLabel::Benign, 20000, 13);
        auto mal_eval = detail::draw_class(m, ClassLabel::Malicious, 20000, 14);
        OperatingPoint op = measure_operating_point(LocalDetector{ld}, ben_eval, mal_eval);
        CHECK(op.tp_rate > prev_tp);
        prev_tp = op.tp_rate;
    }
}

TEST_CASE("separation calibration rejects impossible targets") {
    FVClassModel m = make_fv_model(10, 1.0, kDefaultMaliciousScale, 0.0);
    CHECK_THROWS_AS(calibrate_separation(m, 0.0, 0.9, 1, 1000), std::domain_error);
    CHECK_THROWS_AS(calibrate_separation(m, 0.5, 0.4, 1, 1000), std::domain_error);
    CHECK_THROWS_AS(calibrate_separation(m, 0.06, 1.0, 1, 1000), std::domain_error);

    // A malicious class 50x wider than the benign class keeps the TP rate far
    // below 0.95 at any separation the bracket allows.
    FVClassModel wide = make_fv_model(1, 1.0, 50.0, 0.0);
    CHECK_THROWS_AS(calibrate_separation(wide, 0.06, 0.95, 1, 5000), std::runtime_error);
}

TEST_CASE("fv stream files round-trip exactly") {
    std::vector<StreamFV> stream;
    stream.push_back(StreamFV{FeatureVector(std::vector<double>{0.1, 1.0 / 3.0}), 7, 0.25,
                              ClassLabel::Benign});
    stream.push_back(StreamFV{FeatureVector(std::vector<double>{-1e-300, 12345.6789}), 1086,
                              3599.9999999, ClassLabel::Malicious});
    const std::string path = temp_path("fv_stream.csv");
    save_fv_stream(path, stream);
    auto loaded = load_fv_stream(path);
    REQUIRE(loaded.size() == stream.size());
    for (std::size_t i = 0; i < stream.size(); ++i) {
        CHECK(loaded[i].node_id == stream[i].node_id);
        CHECK(loaded[i].timestamp == stream[i].timestamp);
        CHECK(loaded[i].true_label == stream[i].true_label);
        CHECK(loaded[i].fv.values == stream[i].fv.values);
    }
    std::remove(path.c_str());
}

TEST_CASE("fv stream loader reports the offending line") {
    const std::string path = temp_path("fv_stream_bad.csv");
    {
        std::ofstream out(path);
        out << "1,0.5,benign,0.25\n";
        out << "2,1.5,suspicious,0.5\n";
    }
    CHECK_THROWS_WITH(load_fv_stream(path), Catch::Matchers::ContainsSubstring(":2:"));
    {
        std::ofstream out(path);
        out << "1,0.5,benign\n";
    }
    CHECK_THROWS_WITH(load_fv_stream(path), Catch::Matchers::ContainsSubstring("no feature values"));
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_fv_stream(path), std::runtime_error);
}
