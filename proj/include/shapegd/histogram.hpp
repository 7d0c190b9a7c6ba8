#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"
#include "detector.hpp"
#include "stats.hpp"

namespace shapegd {

// Per-dimension bin boundaries: dims rows of (bins + 1) strictly ascending
// edges. Values outside [front, back] clamp into the first/last bin.
struct BinEdges {
    std::vector<std::vector<double>> edges;

    std::size_t dims() const { return edges.size(); }
    std::size_t bins() const { return edges.empty() ? 0 : edges.front().size() - 1; }

    void validate() const {
        if (edges.empty()) throw std::domain_error("BinEdges: no dimensions");
        std::size_t b = edges.front().size();
        if (b < 2) throw std::domain_error("BinEdges: need at least one bin");
        for (const auto& row : edges) {
            if (row.size() != b) throw std::domain_error("BinEdges: ragged edge rows");
            for (std::size_t i = 1; i < row.size(); ++i) {
                if (!(row[i] > row[i - 1])) {
                    throw std::domain_error("BinEdges: edges must be strictly ascending");
                }
            }
        }
    }

    std::size_t bin_index(std::size_t dim, double x) const {
        const auto& row = edges[dim];
        if (x <= row.front()) return 0;
        if (x >= row.back()) return row.size() - 2;
        // Uniform edges admit direct indexing, but binary search keeps the
        // contract independent of how the edges were built.
        std::size_t lo = 0, hi = row.size() - 1;
        while (hi - lo > 1) {
            std::size_t mid = (lo + hi) / 2;
            if (x < row[mid]) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        return lo;
    }
};

inline BinEdges uniform_edges(const std::vector<double>& mins,
                              const std::vector<double>& maxs, std::size_t bins) {
    if (mins.size() != maxs.size()) throw std::domain_error("uniform_edges: size mismatch");
    if (bins == 0) throw std::domain_error("uniform_edges: bins must be > 0");
    BinEdges e;
    e.edges.resize(mins.size());
    for (std::size_t d = 0; d < mins.size(); ++d) {
        double lo = mins[d], hi = maxs[d];
        if (!(hi > lo)) {
            // Degenerate training range: widen so the edges stay ascending.
            lo -= 0.5;
            hi += 0.5;
        }
        auto& row = e.edges[d];
        row.resize(bins + 1);
        double width = (hi - lo) / static_cast<double>(bins);
        for (std::size_t i = 0; i <= bins; ++i) {
            row[i] = lo + width * static_cast<double>(i);
        }
        row[bins] = hi;
    }
    return e;
}

// An L x b matrix of per-dimension normalized bin weights. An empty source
// set produces an invalid histogram, which downstream turns into NoDecision
// rather than a score (a zero row would read as "identical to reference").
struct VectorHistogram {
    std::vector<std::vector<double>> bins;  // dims rows of b weights
    BinEdges bin_edges;
    bool valid = false;

    std::size_t dims() const { return bins.size(); }
    std::size_t bin_count() const { return bins.empty() ? 0 : bins.front().size(); }
};

// Integer bin-count accumulator: the streaming form of build_histogram, used
// where alerts arrive one at a time. Normalizing counts c/n is exactly what
// build_histogram computes, so the two paths agree bit-for-bit.
struct BinAccumulator {
    const BinEdges* edges = nullptr;
    std::vector<std::uint64_t> counts;  // flattened dims x bins
    std::uint64_t alert_count = 0;

    BinAccumulator() = default;
    explicit BinAccumulator(const BinEdges& e)
        : edges(&e), counts(e.dims() * e.bins(), 0) {}

    void add(const FeatureVector& fv) {
        const std::size_t b = edges->bins();
        for (std::size_t d = 0; d < edges->dims(); ++d) {
            ++counts[d * b + edges->bin_index(d, fv[d])];
        }
        ++alert_count;
    }

    void add_binned(const std::uint16_t* idx) {
        const std::size_t b = edges->bins();
        for (std::size_t d = 0; d < edges->dims(); ++d) {
            ++counts[d * b + idx[d]];
        }
        ++alert_count;
    }

    void remove_binned(const std::uint16_t* idx) {
        const std::size_t b = edges->bins();
        for (std::size_t d = 0; d < edges->dims(); ++d) {
            --counts[d * b + idx[d]];
        }
        --alert_count;
    }

    void reset() {
        std::fill(counts.begin(), counts.end(), 0);
        alert_count = 0;
    }

    VectorHistogram to_histogram() const {
        VectorHistogram h;
        h.bin_edges = *edges;
        const std::size_t dims = edges->dims(), b = edges->bins();
        h.bins.assign(dims, std::vector<double>(b, 0.0));
        if (alert_count == 0) {
            h.valid = false;
            return h;
        }
        const double n = static_cast<double>(alert_count);
        for (std::size_t d = 0; d < dims; ++d) {
            for (std::size_t i = 0; i < b; ++i) {
                h.bins[d][i] = static_cast<double>(counts[d * b + i]) / n;
            }
        }
        h.valid = true;
        return h;
    }
};

inline VectorHistogram build_histogram(const std::vector<AlertFV>& alert_fvs,
                                       const BinEdges& edges) {
    edges.validate();
    BinAccumulator acc(edges);
    for (const auto& a : alert_fvs) {
        if (a.fv.dims() != edges.dims()) {
            throw std::invalid_argument("build_histogram: FV dimension mismatch");
        }
        acc.add(a.fv);
    }
    return acc.to_histogram();
}

// d_W(p, q) = sum_i |sum_{j<=i} (p(j) - q(j))|: the 1-D Wasserstein distance
// between two normalized histograms on a shared bin grid, in bin-width units.
inline double wasserstein_1d(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw std::invalid_argument("wasserstein_1d: length mismatch");
    if (p.empty()) throw std::invalid_argument("wasserstein_1d: empty rows");
    double sp = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        sp += p[i];
        sq += q[i];
    }
    if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9) {
        throw std::invalid_argument("wasserstein_1d: rows must each sum to 1");
    }
    double prefix = 0.0, dist = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        prefix += p[i] - q[i];
        dist += std::abs(prefix);
    }
    return dist;
}

struct ShapeScore {
    double value = 0.0;
};

struct GammaThreshold {
    double gamma = 0.0;
    double percentile = 0.99;
};

// Reference shape of benign false-positive alerts, trained once and then
// immutable. training_fv_count is the total FV budget consumed, alert_count
// the FP alerts the histogram was built from.
struct ReferenceHistogram {
    VectorHistogram histogram;
    std::uint64_t training_fv_count = 0;
    std::uint64_t alert_count = 0;
};

inline void require_same_grid(const VectorHistogram& h, const VectorHistogram& ref) {
    if (h.dims() != ref.dims() || h.bin_count() != ref.bin_count()) {
        throw std::invalid_argument("shape_score: histogram shape mismatch");
    }
    if (h.bin_edges.edges != ref.bin_edges.edges) {
        throw std::invalid_argument("shape_score: bin edges differ");
    }
}

inline ShapeScore shape_score(const VectorHistogram& h, const ReferenceHistogram& ref) {
    if (!h.valid || !ref.histogram.valid) {
        throw std::invalid_argument("shape_score: invalid histogram");
    }
    require_same_grid(h, ref.histogram);
    double total = 0.0;
    for (std::size_t d = 0; d < h.dims(); ++d) {
        total += wasserstein_1d(h.bins[d], ref.histogram.bins[d]);
    }
    return ShapeScore{total};
}

// Builds the reference from the false-positive alerts an LD raises on a
// purely benign stream. Bin edges are fixed here, from the per-dimension
// [min, max] of the training alerts; everything scored later reuses them.
inline ReferenceHistogram train_reference(const std::vector<StreamFV>& benign_stream,
                                          const LocalDetector& ld, std::size_t min_count,
                                          std::size_t bins) {
    std::vector<const FeatureVector*> alerts;
    for (const auto& item : benign_stream) {
        if (classify(ld, item.fv) == ClassLabel::Malicious) alerts.push_back(&item.fv);
    }
    if (alerts.size() < min_count || alerts.empty()) {
        throw std::runtime_error("train_reference: only " + std::to_string(alerts.size()) +
                                 " false-positive alerts, need " + std::to_string(min_count));
    }
    const std::size_t dims = alerts.front()->dims();
    std::vector<double> mins(dims, std::numeric_limits<double>::infinity());
    std::vector<double> maxs(dims, -std::numeric_limits<double>::infinity());
    for (const auto* fv : alerts) {
        for (std::size_t d = 0; d < dims; ++d) {
            mins[d] = std::min(mins[d], (*fv)[d]);
            maxs[d] = std::max(maxs[d], (*fv)[d]);
        }
    }
    BinEdges edges = uniform_edges(mins, maxs, bins);
    BinAccumulator acc(edges);
    for (const auto* fv : alerts) acc.add(*fv);

    ReferenceHistogram ref;
    ref.histogram = acc.to_histogram();
    ref.training_fv_count = benign_stream.size();
    ref.alert_count = alerts.size();
    return ref;
}

// gamma = nearest-rank percentile of benign ShapeScores. Requires enough
// scores for the rank to be meaningful (>= 100 at the default 0.99).
inline GammaThreshold calibrate_gamma(const std::vector<double>& benign_scores,
                                      double percentile) {
    if (!(percentile > 0.0 && percentile <= 1.0)) {
        throw std::domain_error("calibrate_gamma: percentile must be in (0, 1]");
    }
    std::size_t needed = percentile < 1.0
        ? static_cast<std::size_t>(std::ceil(1.0 / (1.0 - percentile)))
        : 1;
    if (benign_scores.size() < needed) {
        throw std::runtime_error("calibrate_gamma: need at least " + std::to_string(needed) +
                                 " benign scores, got " + std::to_string(benign_scores.size()));
    }
    GammaThreshold g;
    g.percentile = percentile;
    g.gamma = percentile_nearest_rank(benign_scores, percentile);
    return g;
}

// Flat-file form of a trained reference plus its threshold. Decimal text at
// %.17g so a save/load cycle is bit-exact.
inline void save_reference(const std::string& path, const ReferenceHistogram& ref,
                           const GammaThreshold& gamma) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_reference: cannot open " + path);
    char buf[64];
    auto emit = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        out << buf;
    };
    out << "shapegd-ref v1\n";
    out << "dims " << ref.histogram.dims() << '\n';
    out << "bins " << ref.histogram.bin_count() << '\n';
    out << "percentile ";
    emit(gamma.percentile);
    out << '\n' << "gamma ";
    emit(gamma.gamma);
    out << '\n' << "training_fv_count " << ref.training_fv_count << '\n';
    out << "alert_count " << ref.alert_count << '\n';
    for (std::size_t d = 0; d < ref.histogram.dims(); ++d) {
        out << "edges " << d;
        for (double v : ref.histogram.bin_edges.edges[d]) {
            out << ' ';
            emit(v);
        }
        out << '\n';
    }
    for (std::size_t d = 0; d < ref.histogram.dims(); ++d) {
        out << "row " << d;
        for (double v : ref.histogram.bins[d]) {
            out << ' ';
            emit(v);
        }
        out << '\n';
    }
}

struct ReferenceBundle {
    ReferenceHistogram reference;
    GammaThreshold gamma;
};

inline ReferenceBundle load_reference(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_reference: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "shapegd-ref v1") {
        throw std::runtime_error("load_reference: " + path + ": bad header");
    }
    ReferenceBundle bundle;
    std::size_t dims = 0, bins = 0;
    auto expect_kv = [&](const char* key) {
        if (!std::getline(in, line)) {
            throw std::runtime_error("load_reference: truncated file at " + std::string(key));
        }
        std::istringstream ss(line);
        std::string k;
        ss >> k;
        if (k != key) throw std::runtime_error("load_reference: expected " + std::string(key));
        return ss;
    };
    { auto ss = expect_kv("dims"); ss >> dims; }
    { auto ss = expect_kv("bins"); ss >> bins; }
    { auto ss = expect_kv("percentile"); ss >> bundle.gamma.percentile; }
    { auto ss = expect_kv("gamma"); ss >> bundle.gamma.gamma; }
    { auto ss = expect_kv("training_fv_count"); ss >> bundle.reference.training_fv_count; }
    { auto ss = expect_kv("alert_count"); ss >> bundle.reference.alert_count; }
    if (dims == 0 || bins == 0) throw std::runtime_error("load_reference: bad dims/bins");

    auto& hist = bundle.reference.histogram;
    hist.bin_edges.edges.assign(dims, {});
    hist.bins.assign(dims, {});
    for (std::size_t d = 0; d < dims; ++d) {
        auto ss = expect_kv("edges");
        std::size_t idx;
        ss >> idx;
        if (idx != d) throw std::runtime_error("load_reference: edges out of order");
        auto& row = hist.bin_edges.edges[d];
        double v;
        while (ss >> v) row.push_back(v);
        if (row.size() != bins + 1) throw std::runtime_error("load_reference: bad edge row");
    }
    for (std::size_t d = 0; d < dims; ++d) {
        auto ss = expect_kv("row");
        std::size_t idx;
        ss >> idx;
        if (idx != d) throw std::runtime_error("load_reference: rows out of order");
        auto& row = hist.bins[d];
        double v;
        while (ss >> v) row.push_back(v);
        if (row.size() != bins) throw std::runtime_error("load_reference: bad weight row");
    }
    hist.bin_edges.validate();
    hist.valid = true;
    return bundle;
}

}  // namespace shapegd
