#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "shapegd/histogram.hpp"
#include "shapegd/rng.hpp"

using namespace shapegd;

namespace {

std::vector<double> random_row(Rng& rng, std::size_t bins) {
    std::vector<double> row(bins);
    double sum = 0.0;
    for (auto& x : row) {
        x = rng.uniform();
        sum += x;
    }
    for (auto& x : row) x /= sum;
    return row;
}

AlertFV alert(std::vector<double> values) {
    return AlertFV{FeatureVector(std::move(values)), 0, 0.0, ClassLabel::Benign};
}

std::string temp_path(const char* name) {
    return std::string("/tmp/shapegd_test_") + name;
}

}  // namespace

TEST_CASE("uniform edges partition the range and clamp outliers") {
    BinEdges e = uniform_edges({0.0}, {10.0}, 5);
    REQUIRE(e.dims() == 1);
    REQUIRE(e.bins() == 5);
    CHECK(e.edges[0].front() == 0.0);
    CHECK(e.edges[0].back() == 10.0);
    CHECK_NOTHROW(e.validate());

    CHECK(e.bin_index(0, -100.0) == 0);
    CHECK(e.bin_index(0, 0.0) == 0);
    CHECK(e.bin_index(0, 1.9999) == 0);
    CHECK(e.bin_index(0, 2.0) == 1);
    CHECK(e.bin_index(0, 9.9999) == 4);
    CHECK(e.bin_index(0, 10.0) == 4);
    CHECK(e.bin_index(0, 1e12) == 4);

    // A collapsed training range still yields ascending edges.
    BinEdges flat = uniform_edges({3.0}, {3.0}, 4);
    CHECK_NOTHROW(flat.validate());
    CHECK(flat.edges[0].front() < 3.0);
    CHECK(flat.edges[0].back() > 3.0);

    CHECK_THROWS_AS(uniform_edges({0.0, 1.0}, {1.0}, 5), std::domain_error);
    CHECK_THROWS_AS(uniform_edges({0.0}, {1.0}, 0), std::domain_error);

    BinEdges bad;
    CHECK_THROWS_AS(bad.validate(), std::domain_error);
    bad.edges = {{0.0, 1.0}, {0.0, 1.0, 2.0}};
    CHECK_THROWS_AS(bad.validate(), std::domain_error);
    bad.edges = {{0.0, 1.0, 1.0}};
    CHECK_THROWS_AS(bad.validate(), std::domain_error);
}

TEST_CASE("wasserstein distance on hand-checked pairs") {
    CHECK(wasserstein_1d({1.0, 0.0}, {0.0, 1.0}) == 1.0);
    CHECK(wasserstein_1d({1.0, 0.0, 0.0, 0.0, 0.0}, {0.0, 0.0, 0.0, 1.0, 0.0}) == 3.0);
    CHECK(wasserstein_1d({0.5, 0.5}, {0.0, 1.0}) == 0.5);
    CHECK(wasserstein_1d({0.25, 0.75}, {0.25, 0.75}) == 0.0);

    CHECK_THROWS_AS(wasserstein_1d({1.0}, {0.5, 0.5}), std::invalid_argument);
    CHECK_THROWS_AS(wasserstein_1d({}, {}), std::invalid_argument);
    CHECK_THROWS_AS(wasserstein_1d({0.5, 0.4}, {0.5, 0.5}), std::invalid_argument);
}

TEST_CASE("wasserstein distance behaves like a metric on random histograms") {
    Rng rng(501);
    for (int trial = 0; trial < 1000; ++trial) {
        auto p = random_row(rng, 50);
        auto q = random_row(rng, 50);
        auto r = random_row(rng, 50);
        double pq = wasserstein_1d(p, q);
        CHECK(pq >= 0.0);
        CHECK(pq == wasserstein_1d(q, p));
        CHECK(wasserstein_1d(p, p) == 0.0);
        CHECK(pq <= wasserstein_1d(p, r) + wasserstein_1d(r, q) + 1e-9);
    }
}

TEST_CASE("accumulator matches batch histogram construction") {
    BinEdges e = uniform_edges({0.0, -1.0}, {1.0, 1.0}, 4);
    Rng rng(502);
    std::vector<AlertFV> alerts;
    for (int i = 0; i < 500; ++i) {
        alerts.push_back(alert({rng.uniform(), rng.uniform(-1.0, 1.0)}));
    }
    VectorHistogram batch = build_histogram(alerts, e);

    BinAccumulator acc(e);
    for (const auto& a : alerts) acc.add(a.fv);
    VectorHistogram streamed = acc.to_histogram();

    REQUIRE(batch.valid);
    REQUIRE(streamed.valid);
    CHECK(batch.bins == streamed.bins);
    CHECK(acc.alert_count == alerts.size());
}

TEST_CASE("binned add and remove invert each other") {
    BinEdges e = uniform_edges({0.0, 0.0}, {1.0, 1.0}, 8);
    BinAccumulator acc(e);
    std::uint16_t a_idx[2] = {1, 7};
    std::uint16_t b_idx[2] = {3, 0};
    acc.add_binned(a_idx);
    acc.add_binned(b_idx);
    CHECK(acc.alert_count == 2);
    acc.remove_binned(b_idx);
    CHECK(acc.alert_count == 1);
    BinAccumulator only_a(e);
    only_a.add_binned(a_idx);
    CHECK(acc.counts == only_a.counts);

    acc.reset();
    CHECK(acc.alert_count == 0);
    CHECK(acc.to_histogram().valid == false);

    // add_binned must agree with add for the FV the indices came from.
    FeatureVector fv(std::vector<double>{0.15, 0.99});
    std::uint16_t idx[2] = {static_cast<std::uint16_t>(e.bin_index(0, fv[0])),
                            static_cast<std::uint16_t>(e.bin_index(1, fv[1]))};
    BinAccumulator via_fv(e), via_idx(e);
    via_fv.add(fv);
    via_idx.add_binned(idx);
    CHECK(via_fv.counts == via_idx.counts);
}

TEST_CASE("histogram weights ignore the sample count") {
    BinEdges e = uniform_edges({-3.0}, {3.0}, 16);
    Rng rng(503);
    std::vector<AlertFV> once;
    for (int i = 0; i < 300; ++i) once.push_back(alert({rng.normal()}));
    std::vector<AlertFV> doubled = once;
    doubled.insert(doubled.end(), once.begin(), once.end());

    VectorHistogram h1 = build_histogram(once, e);
    VectorHistogram h2 = build_histogram(doubled, e);
    CHECK(h1.bins == h2.bins);
}

TEST_CASE("histogram of uniform draws is flat, of constants is one-hot") {
    BinEdges e = uniform_edges({0.0}, {1.0}, 10);
    Rng rng(504);
    std::vector<AlertFV> uniform_alerts;
    for (int i = 0; i < 100000; ++i) uniform_alerts.push_back(alert({rng.uniform()}));
    VectorHistogram flat = build_histogram(uniform_alerts, e);
    for (double w : flat.bins[0]) CHECK(w == Catch::Approx(0.1).margin(0.02));

    std::vector<AlertFV> constant(25, alert({0.55}));
    VectorHistogram spike = build_histogram(constant, e);
    CHECK(spike.bins[0][5] == 1.0);

    VectorHistogram empty = build_histogram({}, e);
    CHECK_FALSE(empty.valid);

    CHECK_THROWS_AS(build_histogram({alert({0.5, 0.5})}, e), std::invalid_argument);
}

TEST_CASE("shape score sums per-dimension distances and rejects mismatches") {
    BinEdges e = uniform_edges({0.0, 0.0}, {1.0, 1.0}, 4);
    std::vector<AlertFV> ref_alerts, probe_alerts;
    Rng rng(505);
    for (int i = 0; i < 2000; ++i) ref_alerts.push_back(alert({rng.uniform(), rng.uniform()}));
    for (int i = 0; i < 700; ++i) probe_alerts.push_back(alert({rng.uniform(), rng.uniform()}));

    ReferenceHistogram ref;
    ref.histogram = build_histogram(ref_alerts, e);
    VectorHistogram probe = build_histogram(probe_alerts, e);

    double manual = wasserstein_1d(probe.bins[0], ref.histogram.bins[0]) +
                    wasserstein_1d(probe.bins[1], ref.histogram.bins[1]);
    CHECK(shape_score(probe, ref).value == manual);
    CHECK(shape_score(ref.histogram, ref).value == 0.0);

    // Duplicating the probe set leaves the score bit-identical.
    std::vector<AlertFV> dup = probe_alerts;
    for (int copy = 0; copy < 9; ++copy) {
        dup.insert(dup.end(), probe_alerts.begin(), probe_alerts.end());
    }
    CHECK(shape_score(build_histogram(dup, e), ref).value == shape_score(probe, ref).value);

    VectorHistogram invalid;
    CHECK_THROWS_AS(shape_score(invalid, ref), std::invalid_argument);

    BinEdges other = uniform_edges({0.0, 0.0}, {2.0, 2.0}, 4);
    VectorHistogram shifted = build_histogram(probe_alerts, other);
    CHECK_THROWS_AS(shape_score(shifted, ref), std::invalid_argument);

    BinEdges fewer = uniform_edges({0.0, 0.0}, {1.0, 1.0}, 8);
    VectorHistogram finer = build_histogram(probe_alerts, fewer);
    CHECK_THROWS_AS(shape_score(finer, ref), std::invalid_argument);
}

TEST_CASE("reference training keeps counts and spans the alert range") {
    Rng rng(506);
    std::vector<StreamFV> stream;
    for (int i = 0; i < 20000; ++i) {
        stream.push_back(StreamFV{FeatureVector(std::vector<double>{rng.normal(-1.0, 1.0)}),
                                  0, static_cast<double>(i), ClassLabel::Benign});
    }
    LocalDetector ld{ThresholdLD{0.0}};
    ReferenceHistogram ref = train_reference(stream, ld, 100, 50);
    CHECK(ref.training_fv_count == stream.size());
    CHECK(ref.alert_count > 2000);
    CHECK(ref.histogram.valid);
    REQUIRE(ref.histogram.dims() == 1);
    CHECK(ref.histogram.bin_count() == 50);
    // Every training alert landed strictly above the detector threshold.
    CHECK(ref.histogram.bin_edges.edges[0].front() > 0.0);

    CHECK_THROWS_AS(train_reference(stream, ld, 1000000, 50), std::runtime_error);
    CHECK_THROWS_AS(train_reference({}, ld, 0, 50), std::runtime_error);
}

TEST_CASE("gamma is the nearest-rank percentile of benign scores") {
    std::vector<double> scores;
    for (int i = 1; i <= 100; ++i) scores.push_back(i);
    GammaThreshold g = calibrate_gamma(scores, 0.99);
    CHECK(g.gamma == 99.0);
    CHECK(g.percentile == 0.99);
    CHECK(calibrate_gamma(scores, 1.0).gamma == 100.0);

    CHECK_THROWS_AS(calibrate_gamma(std::vector<double>(99, 1.0), 0.99), std::runtime_error);
    CHECK_NOTHROW(calibrate_gamma(std::vector<double>(100, 1.0), 0.99));
    CHECK_THROWS_AS(calibrate_gamma(scores, 0.0), std::domain_error);
    CHECK_THROWS_AS(calibrate_gamma(scores, 1.1), std::domain_error);
}

TEST_CASE("reference files round-trip exactly") {
    Rng rng(507);
    std::vector<StreamFV> stream;
    for (int i = 0; i < 30000; ++i) {
        stream.push_back(StreamFV{
            FeatureVector(std::vector<double>{rng.normal(-1.0, 1.0), rng.normal(0.5, 2.0)}),
            0, static_cast<double>(i), ClassLabel::Benign});
    }
    LinearLD ld{{1.0, 0.2}, 0.3};
    ReferenceHistogram ref = train_reference(stream, LocalDetector{ld}, 100, 50);
    GammaThreshold gamma{1.234567890123456789, 0.99};

    const std::string path = temp_path("reference.txt");
    save_reference(path, ref, gamma);
    ReferenceBundle loaded = load_reference(path);

    CHECK(loaded.gamma.gamma == gamma.gamma);
    CHECK(loaded.gamma.percentile == gamma.percentile);
    CHECK(loaded.reference.training_fv_count == ref.training_fv_count);
    CHECK(loaded.reference.alert_count == ref.alert_count);
    CHECK(loaded.reference.histogram.bins == ref.histogram.bins);
    CHECK(loaded.reference.histogram.bin_edges.edges == ref.histogram.bin_edges.edges);
    CHECK(loaded.reference.histogram.valid);

    {
        std::ofstream out(path);
        out << "something else\n";
    }
    CHECK_THROWS_WITH(load_reference(path), Catch::Matchers::ContainsSubstring("bad header"));
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_reference(path), std::runtime_error);
}
