#pragma once

#include <atomic>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "config.hpp"
#include "core.hpp"
#include "detector.hpp"
#include "global.hpp"
#include "histogram.hpp"
#include "rng.hpp"
#include "roc.hpp"
#include "stats.hpp"
#include "synthetic.hpp"

namespace shapegd {

// ---------------------------------------------------------------------------
// Worker pool: runs fn(0..n-1) across threads. Tasks must be independent and
// deterministic in their index (all experiment tasks derive their seeds from
// the index), so the schedule cannot affect results.

inline unsigned resolve_threads(std::uint64_t configured) {
    if (configured != 0) return static_cast<unsigned>(configured);
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 4 : hw;
}

inline void parallel_for(std::size_t n, unsigned threads,
                         const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    unsigned workers = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto work = [&] {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// CSV output. All floating-point cells print as %.17g so reruns are
// byte-comparable; NaN/inf cells are a contract violation and throw.

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path) {
        if (!out_) throw std::runtime_error("CsvWriter: cannot open " + path);
        columns_ = header.size();
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i != 0) out_ << ',';
            out_ << header[i];
        }
        out_ << '\n';
    }

    CsvWriter& cell(double v) {
        if (!std::isfinite(v)) throw std::logic_error("CsvWriter: non-finite value");
        char buf[48];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return raw(buf);
    }

    template <typename T>
        requires std::integral<T>
    CsvWriter& cell(T v) {
        return raw(std::to_string(v));
    }

    CsvWriter& cell(const std::string& v) { return raw(v); }
    CsvWriter& cell(const char* v) { return raw(v); }

    void end_row() {
        if (in_row_ != columns_) throw std::logic_error("CsvWriter: row width mismatch");
        out_ << '\n';
        in_row_ = 0;
    }

private:
    CsvWriter& raw(const std::string& s) {
        if (in_row_ != 0) out_ << ',';
        out_ << s;
        ++in_row_;
        return *this;
    }

    std::ofstream out_;
    std::size_t columns_ = 0;
    std::size_t in_row_ = 0;
};

// ---------------------------------------------------------------------------
// Model preparation from the [model] config section.

struct ModelBundle {
    FVClassModel model;
    LocalDetector ld;
    OperatingPoint measured;
    double target_fp = 0.06;
    double target_tp = 0.924;
};

namespace detail {
inline std::vector<double> broadcast_or_list(const Config& cfg, const std::string& key,
                                             double fallback, std::size_t dims) {
    std::vector<double> v = cfg.get_double_list("model", key, {fallback});
    if (v.size() == 1) return std::vector<double>(dims, v[0]);
    if (v.size() != dims) {
        throw std::runtime_error("config: [model] " + key + ": expected 1 or " +
                                 std::to_string(dims) + " values");
    }
    return v;
}
}  // namespace detail

inline ModelBundle prepare_model(const Config& cfg, std::uint64_t seed) {
    ModelBundle bundle;
    const std::size_t dims = cfg.get_u64("model", "dims", 10);
    bundle.target_fp = cfg.get_double("model", "target_fp", 0.06);
    bundle.target_tp = cfg.get_double("model", "target_tp", 0.924);
    const std::size_t cal_samples = cfg.get_u64("model", "calibration_samples", 100000);

    FVClassModel model;
    model.dims = dims;
    model.benign_mean_vector = detail::broadcast_or_list(cfg, "benign_mean", 0.0, dims);
    model.benign_scale = detail::broadcast_or_list(cfg, "benign_scale", 1.0, dims);
    model.malicious_scale =
        detail::broadcast_or_list(cfg, "malicious_scale", kDefaultMaliciousScale, dims);
    const bool mal_mean_given = cfg.has("model", "malicious_mean");
    if (mal_mean_given) {
        model.malicious_mean_vector = detail::broadcast_or_list(cfg, "malicious_mean", 0.0, dims);
        double norm2 = 0.0;
        for (std::size_t d = 0; d < dims; ++d) {
            double diff = model.malicious_mean_vector[d] - model.benign_mean_vector[d];
            norm2 += diff * diff;
        }
        model.separation = std::sqrt(norm2);
    } else {
        model.malicious_mean_vector = model.benign_mean_vector;
    }
    model.validate();

    const std::string ld_kind = cfg.get_string("model", "ld", "linear");
    const std::string separation = cfg.get_string("model", "separation",
                                                  mal_mean_given ? "given" : "auto");

    if (ld_kind == "threshold") {
        if (dims != 1) throw std::runtime_error("config: threshold LD requires dims = 1");
        if (separation == "auto") {
            throw std::runtime_error("config: threshold LD does not support separation = auto");
        }
        if (separation != "given") set_separation(model, std::stod(separation));
        bundle.model = model;
        bundle.ld = ThresholdLD{cfg.get_double("model", "threshold", 0.0)};
    } else if (ld_kind == "linear") {
        if (separation == "auto") {
            CalibrationResult cal =
                calibrate_separation(model, bundle.target_fp, bundle.target_tp, seed, cal_samples);
            bundle.model = cal.model;
            bundle.ld = cal.ld;
            bundle.measured = cal.measured;
            return bundle;
        }
        if (separation != "given") set_separation(model, std::stod(separation));
        auto benign = detail::draw_class(model, ClassLabel::Benign, cal_samples,
                                         mix_seed(seed, seed_stream::model_calibration, 11));
        auto malicious = detail::draw_class(model, ClassLabel::Malicious, cal_samples,
                                            mix_seed(seed, seed_stream::model_calibration, 12));
        bundle.model = model;
        bundle.ld = train_linear_ld(benign, malicious, bundle.target_fp);
    } else {
        throw std::runtime_error("config: [model] ld must be linear or threshold");
    }

    auto benign_eval = detail::draw_class(bundle.model, ClassLabel::Benign, cal_samples,
                                          mix_seed(seed, seed_stream::model_calibration, 13));
    auto malicious_eval = detail::draw_class(bundle.model, ClassLabel::Malicious, cal_samples,
                                             mix_seed(seed, seed_stream::model_calibration, 14));
    bundle.measured = measure_operating_point(bundle.ld, benign_eval, malicious_eval);
    return bundle;
}

// ---------------------------------------------------------------------------
// Reference training from a synthetic benign stream.

struct ReferenceSetup {
    ReferenceHistogram reference;
    std::vector<double> training_alert_centroid;
};

inline std::vector<StreamFV> generate_benign_stream(const FVClassModel& model,
                                                    std::uint64_t count, std::uint64_t seed) {
    std::vector<StreamFV> stream;
    stream.reserve(count);
    Rng rng(seed);
    for (std::uint64_t i = 0; i < count; ++i) {
        StreamFV item;
        item.node_id = static_cast<NodeId>(i % 1000);
        item.timestamp = static_cast<double>(i / 1000);
        item.true_label = ClassLabel::Benign;
        sample_fv_into(model, ClassLabel::Benign, rng, item.fv);
        stream.push_back(std::move(item));
    }
    return stream;
}

inline ReferenceSetup train_reference_from_model(const ModelBundle& bundle,
                                                 std::uint64_t fv_budget,
                                                 std::size_t min_alerts, std::size_t bins,
                                                 std::uint64_t seed) {
    auto stream = generate_benign_stream(bundle.model, fv_budget,
                                         mix_seed(seed, seed_stream::reference_training));
    ReferenceSetup setup;
    setup.reference = train_reference(stream, bundle.ld, min_alerts, bins);
    setup.training_alert_centroid.assign(bundle.model.dims, 0.0);
    std::uint64_t alerts = 0;
    for (const auto& item : stream) {
        if (classify(bundle.ld, item.fv) == ClassLabel::Malicious) {
            for (std::size_t d = 0; d < bundle.model.dims; ++d) {
                setup.training_alert_centroid[d] += item.fv[d];
            }
            ++alerts;
        }
    }
    for (auto& v : setup.training_alert_centroid) v /= static_cast<double>(alerts);
    return setup;
}

// ---------------------------------------------------------------------------
// Direct neighborhood sampling (no trace machinery): n_fvs FVs of which the
// first n_malicious are malicious, pushed through the LD; alerts accumulate
// into one accumulator per bin-edge variant plus an FV sum for the
// clustering baseline.

struct SampledNeighborhood {
    std::uint64_t fv_count = 0;
    std::uint64_t alert_count = 0;
    std::vector<BinAccumulator> accs;
    std::vector<double> alert_fv_sum;
};

inline SampledNeighborhood sample_neighborhood(const FVClassModel& model,
                                               const LocalDetector& ld, std::uint64_t n_fvs,
                                               std::uint64_t n_malicious,
                                               const std::vector<const BinEdges*>& edge_sets,
                                               std::uint64_t seed) {
    if (n_malicious > n_fvs) {
        throw std::invalid_argument("sample_neighborhood: more malicious FVs than FVs");
    }
    SampledNeighborhood nb;
    nb.fv_count = n_fvs;
    nb.accs.reserve(edge_sets.size());
    for (const auto* e : edge_sets) nb.accs.emplace_back(*e);
    nb.alert_fv_sum.assign(model.dims, 0.0);
    Rng rng(seed);
    FeatureVector fv;
    for (std::uint64_t i = 0; i < n_fvs; ++i) {
        ClassLabel label = i < n_malicious ? ClassLabel::Malicious : ClassLabel::Benign;
        sample_fv_into(model, label, rng, fv);
        if (classify(ld, fv) != ClassLabel::Malicious) continue;
        ++nb.alert_count;
        for (auto& acc : nb.accs) acc.add(fv);
        for (std::size_t d = 0; d < model.dims; ++d) nb.alert_fv_sum[d] += fv[d];
    }
    return nb;
}

// ---------------------------------------------------------------------------
// Pure-shape experiment: benign vs malicious neighborhoods scored against the
// reference, as a function of bin count.

struct PureShapeVariant {
    std::size_t bins = 0;
    double gamma = 0.0;
    double fp_rate = 0.0;
    double tp_rate = 0.0;
    double max_benign = 0.0;
    double min_malicious = 0.0;
    std::uint64_t no_decision = 0;
    std::vector<double> calibration_scores;
    std::vector<double> benign_scores;
    std::vector<double> malicious_scores;
};

struct PureShapeResult {
    OperatingPoint ld_measured;
    std::uint64_t reference_fv_count = 0;
    std::uint64_t reference_alert_count = 0;
    std::vector<PureShapeVariant> variants;
};

inline PureShapeResult run_pure_shape_experiment(const Config& cfg) {
    const std::uint64_t seed = cfg.get_u64("experiment", "seed", 1);
    const unsigned threads = resolve_threads(cfg.get_u64("experiment", "threads", 0));
    ModelBundle bundle = prepare_model(cfg, seed);

    const std::uint64_t ref_budget = cfg.get_u64("shape", "reference_fv_budget", 15000);
    const std::size_t ref_min_alerts = cfg.get_u64("shape", "reference_min_alerts", 100);
    const double percentile = cfg.get_double("shape", "gamma_percentile", 0.99);
    const std::uint64_t min_fvs = cfg.get_u64("shape", "min_fvs", 15000);

    std::vector<std::uint64_t> bin_counts = cfg.get_u64_list("pure_shape", "bin_counts", {50});
    const std::uint64_t n_eval = cfg.get_u64("pure_shape", "neighborhoods", 500);
    const std::uint64_t n_cal = cfg.get_u64("pure_shape", "calibration_neighborhoods", 500);
    const std::uint64_t nb_fvs = cfg.get_u64("pure_shape", "neighborhood_fvs", 15000);
    const bool null_control = cfg.get_bool("pure_shape", "null_control", false);
    const double malicious_fraction = cfg.get_double("pure_shape", "malicious_fraction", 1.0);

    if (nb_fvs < min_fvs) {
        throw std::runtime_error("pure_shape: neighborhood_fvs below the eligibility minimum");
    }

    // One reference per bin count, all trained from the same benign stream.
    std::vector<ReferenceSetup> refs;
    refs.reserve(bin_counts.size());
    for (std::uint64_t b : bin_counts) {
        refs.push_back(train_reference_from_model(bundle, ref_budget, ref_min_alerts,
                                                  static_cast<std::size_t>(b), seed));
    }
    std::vector<const BinEdges*> edge_sets;
    for (const auto& r : refs) edge_sets.push_back(&r.reference.histogram.bin_edges);

    const std::uint64_t n_mal_fvs = static_cast<std::uint64_t>(
        std::llround(malicious_fraction * static_cast<double>(nb_fvs)));

    // Three blocks of neighborhoods: calibration (benign), eval benign, eval
    // malicious. Scored per bin variant; -1 marks an empty alert set.
    struct Block {
        std::uint64_t count;
        std::uint64_t n_malicious;
        std::uint64_t stream_tag;
    };
    const std::vector<Block> blocks = {
        {n_cal, 0, 1},
        {n_eval, 0, 2},
        {n_eval, null_control ? 0 : n_mal_fvs, 3},
    };

    std::vector<std::vector<std::vector<double>>> scores(blocks.size());
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
        scores[bi].assign(bin_counts.size(), std::vector<double>(blocks[bi].count, -1.0));
    }

    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
        const Block& block = blocks[bi];
        parallel_for(block.count, threads, [&](std::size_t i) {
            std::uint64_t nb_seed =
                mix_seed(seed, seed_stream::evaluation, block.stream_tag, i);
            SampledNeighborhood nb = sample_neighborhood(bundle.model, bundle.ld, nb_fvs,
                                                         block.n_malicious, edge_sets, nb_seed);
            for (std::size_t v = 0; v < bin_counts.size(); ++v) {
                if (nb.alert_count == 0) continue;
                ShapeScore s = shape_score(nb.accs[v].to_histogram(), refs[v].reference);
                scores[bi][v][i] = s.value;
            }
        });
    }

    PureShapeResult result;
    result.ld_measured = bundle.measured;
    result.reference_fv_count = refs.front().reference.training_fv_count;
    result.reference_alert_count = refs.front().reference.alert_count;

    for (std::size_t v = 0; v < bin_counts.size(); ++v) {
        PureShapeVariant variant;
        variant.bins = static_cast<std::size_t>(bin_counts[v]);
        variant.calibration_scores = scores[0][v];
        variant.benign_scores = scores[1][v];
        variant.malicious_scores = scores[2][v];

        std::vector<double> cal;
        for (double s : variant.calibration_scores) {
            if (s >= 0.0) cal.push_back(s);
        }
        GammaThreshold g = calibrate_gamma(cal, percentile);
        variant.gamma = g.gamma;

        std::uint64_t fp = 0, benign_decided = 0;
        variant.max_benign = 0.0;
        for (double s : variant.benign_scores) {
            if (s < 0.0) {
                ++variant.no_decision;
                continue;
            }
            ++benign_decided;
            if (s > g.gamma) ++fp;
            variant.max_benign = std::max(variant.max_benign, s);
        }
        std::uint64_t tp = 0, mal_decided = 0;
        variant.min_malicious = std::numeric_limits<double>::max();
        for (double s : variant.malicious_scores) {
            if (s < 0.0) {
                ++variant.no_decision;
                continue;
            }
            ++mal_decided;
            if (s > g.gamma) ++tp;
            variant.min_malicious = std::min(variant.min_malicious, s);
        }
        if (mal_decided == 0) variant.min_malicious = 0.0;
        variant.fp_rate = benign_decided == 0 ? 0.0
                                              : static_cast<double>(fp) / benign_decided;
        variant.tp_rate = mal_decided == 0 ? 0.0 : static_cast<double>(tp) / mal_decided;
        result.variants.push_back(std::move(variant));
    }
    return result;
}

inline void write_pure_shape_outputs(const PureShapeResult& result, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    CsvWriter scores(out_dir + "/scores.csv", {"bins", "set", "index", "score", "decided"});
    for (const auto& variant : result.variants) {
        auto dump = [&](const char* name, const std::vector<double>& vals) {
            for (std::size_t i = 0; i < vals.size(); ++i) {
                bool decided = vals[i] >= 0.0;
                scores.cell(static_cast<std::uint64_t>(variant.bins))
                    .cell(name)
                    .cell(i)
                    .cell(decided ? vals[i] : 0.0)
                    .cell(decided ? "yes" : "no");
                scores.end_row();
            }
        };
        dump("calibration", variant.calibration_scores);
        dump("benign", variant.benign_scores);
        dump("malicious", variant.malicious_scores);
    }
    CsvWriter summary(out_dir + "/summary.csv",
                      {"bins", "gamma", "fp_rate", "tp_rate", "max_benign", "min_malicious",
                       "no_decision", "ld_fp", "ld_tp", "reference_alerts"});
    for (const auto& variant : result.variants) {
        summary.cell(static_cast<std::uint64_t>(variant.bins))
            .cell(variant.gamma)
            .cell(variant.fp_rate)
            .cell(variant.tp_rate)
            .cell(variant.max_benign)
            .cell(variant.min_malicious)
            .cell(variant.no_decision)
            .cell(result.ld_measured.fp_rate)
            .cell(result.ld_measured.tp_rate)
            .cell(result.reference_alert_count);
        summary.end_row();
    }
}

// ---------------------------------------------------------------------------
// Count-GD fragility sweep plus the Shape-GD precondition at the same
// partial-infection level.

struct CountFragilityPoint {
    double relative_error = 0.0;
    double fp_rate = 0.0;
    double tp_rate = 0.0;
};

struct CountFragilityResult {
    std::vector<CountFragilityPoint> points;
    double shape_fp = 0.0;
    double shape_tp = 0.0;
    double gamma = 0.0;
    double infected_fraction = 0.0;
    OperatingPoint ld_measured;
};

inline CountFragilityResult run_count_fragility(const Config& cfg) {
    const std::uint64_t seed = cfg.get_u64("experiment", "seed", 1);
    const unsigned threads = resolve_threads(cfg.get_u64("experiment", "threads", 0));
    ModelBundle bundle = prepare_model(cfg, seed);

    const std::uint64_t fv_count = cfg.get_u64("count_fragility", "fv_count", 15000);
    const double infected_fraction =
        cfg.get_double("count_fragility", "infected_fraction", 0.015);
    const double err_min = cfg.get_double("count_fragility", "error_min", -0.10);
    const double err_max = cfg.get_double("count_fragility", "error_max", 0.25);
    const double err_step = cfg.get_double("count_fragility", "error_step", 0.01);
    const std::size_t runs = cfg.get_u64("count_fragility", "runs", 200);
    const std::uint64_t shape_nbds = cfg.get_u64("count_fragility", "shape_neighborhoods", 2000);

    if (!(err_step > 0.0) || err_max < err_min) {
        throw std::runtime_error("count_fragility: bad error grid");
    }

    CountFragilityResult result;
    result.infected_fraction = infected_fraction;
    result.ld_measured = bundle.measured;

    // Shape-GD at the same infection level, through the standard pipeline.
    const std::size_t bins = cfg.get_u64("shape", "bins", 50);
    const std::uint64_t ref_budget = cfg.get_u64("shape", "reference_fv_budget", 15000);
    const std::size_t ref_min_alerts = cfg.get_u64("shape", "reference_min_alerts", 100);
    const double percentile = cfg.get_double("shape", "gamma_percentile", 0.99);
    ReferenceSetup ref = train_reference_from_model(bundle, ref_budget, ref_min_alerts, bins, seed);
    std::vector<const BinEdges*> edges = {&ref.reference.histogram.bin_edges};

    const std::uint64_t n_infected_fvs = static_cast<std::uint64_t>(
        std::llround(infected_fraction * static_cast<double>(fv_count)));
    const std::uint64_t n_cal = std::max<std::uint64_t>(shape_nbds, 100);
    std::vector<double> cal_scores(n_cal, -1.0), ben_scores(shape_nbds, -1.0),
        mal_scores(shape_nbds, -1.0);
    auto run_block = [&](std::vector<double>& out, std::uint64_t n_mal, std::uint64_t tag) {
        parallel_for(out.size(), threads, [&](std::size_t i) {
            SampledNeighborhood nb =
                sample_neighborhood(bundle.model, bundle.ld, fv_count, n_mal, edges,
                                    mix_seed(seed, seed_stream::evaluation, tag, i));
            if (nb.alert_count == 0) return;
            out[i] = shape_score(nb.accs[0].to_histogram(), ref.reference).value;
        });
    };
    run_block(cal_scores, 0, 11);
    run_block(ben_scores, 0, 12);
    run_block(mal_scores, n_infected_fvs, 13);

    std::vector<double> cal;
    for (double s : cal_scores) {
        if (s >= 0.0) cal.push_back(s);
    }
    GammaThreshold g = calibrate_gamma(cal, percentile);
    result.gamma = g.gamma;
    std::uint64_t fp = 0, tp = 0, nb_decided = 0, nm_decided = 0;
    for (double s : ben_scores) {
        if (s < 0.0) continue;
        ++nb_decided;
        if (s > g.gamma) ++fp;
    }
    for (double s : mal_scores) {
        if (s < 0.0) continue;
        ++nm_decided;
        if (s > g.gamma) ++tp;
    }
    result.shape_fp = nb_decided == 0 ? 0.0 : static_cast<double>(fp) / nb_decided;
    result.shape_tp = nm_decided == 0 ? 0.0 : static_cast<double>(tp) / nm_decided;

    // Count-GD rate curve over the size-error grid.
    std::vector<double> grid;
    for (double e = err_min; e <= err_max + 1e-12; e += err_step) grid.push_back(e);
    result.points.resize(grid.size());
    CountGDConfig base;
    base.ld_fp_rate = bundle.measured.fp_rate;
    base.alert_threshold_percentile = cfg.get_double("shape", "gamma_percentile", 0.99);
    // Same seed at every grid point (common random numbers): each simulated
    // neighborhood keeps its alert count while only the threshold moves, so
    // the rate curves are exactly monotone in the size error.
    parallel_for(grid.size(), threads, [&](std::size_t i) {
        CountSensitivity s =
            count_gd_sensitivity(fv_count, grid[i], base, infected_fraction,
                                 bundle.measured.tp_rate, runs, runs,
                                 mix_seed(seed, seed_stream::evaluation, 21));
        result.points[i] = {grid[i], s.fp_rate, s.tp_rate};
    });
    return result;
}

inline void write_count_fragility_outputs(const CountFragilityResult& result,
                                          const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    CsvWriter points(out_dir + "/fragility.csv", {"relative_error", "count_fp", "count_tp"});
    for (const auto& p : result.points) {
        points.cell(p.relative_error).cell(p.fp_rate).cell(p.tp_rate);
        points.end_row();
    }
    CsvWriter summary(out_dir + "/fragility_summary.csv",
                      {"infected_fraction", "shape_fp", "shape_tp", "gamma", "ld_fp", "ld_tp"});
    summary.cell(result.infected_fraction)
        .cell(result.shape_fp)
        .cell(result.shape_tp)
        .cell(result.gamma)
        .cell(result.ld_measured.fp_rate)
        .cell(result.ld_measured.tp_rate);
    summary.end_row();
}

// ---------------------------------------------------------------------------
// Clustering baseline vs Shape-GD on partially infected neighborhoods.

struct ClusterAucResult {
    double cluster_auc = 0.0;
    double shape_verdict_auc = 0.0;
    double shape_score_auc = 0.0;
    double gamma = 0.0;
    double infected_fraction = 0.0;
    std::vector<double> cluster_benign, cluster_malicious;
    std::vector<double> shape_benign, shape_malicious;
    std::vector<double> verdict_benign, verdict_malicious;
};

inline ClusterAucResult run_cluster_auc(const Config& cfg) {
    const std::uint64_t seed = cfg.get_u64("experiment", "seed", 1);
    const unsigned threads = resolve_threads(cfg.get_u64("experiment", "threads", 0));
    ModelBundle bundle = prepare_model(cfg, seed);

    const std::size_t bins = cfg.get_u64("shape", "bins", 50);
    const std::uint64_t ref_budget = cfg.get_u64("shape", "reference_fv_budget", 15000);
    const std::size_t ref_min_alerts = cfg.get_u64("shape", "reference_min_alerts", 100);
    const double percentile = cfg.get_double("shape", "gamma_percentile", 0.99);
    const std::uint64_t min_fvs = cfg.get_u64("shape", "min_fvs", 15000);

    const std::uint64_t fv_count = cfg.get_u64("cluster", "fv_count", 30000);
    const double infected_fraction = cfg.get_double("cluster", "infected_fraction", 0.01);
    const std::uint64_t n_eval = cfg.get_u64("cluster", "neighborhoods", 400);
    const std::uint64_t n_cal = cfg.get_u64("cluster", "calibration_neighborhoods", 400);
    if (fv_count < min_fvs) {
        throw std::runtime_error("cluster: fv_count below the eligibility minimum");
    }

    ReferenceSetup ref = train_reference_from_model(bundle, ref_budget, ref_min_alerts, bins, seed);
    std::vector<const BinEdges*> edges = {&ref.reference.histogram.bin_edges};
    const std::uint64_t n_infected_fvs = static_cast<std::uint64_t>(
        std::llround(infected_fraction * static_cast<double>(fv_count)));

    ClusterAucResult result;
    result.infected_fraction = infected_fraction;

    std::vector<double> cal_scores(n_cal, -1.0);
    parallel_for(n_cal, threads, [&](std::size_t i) {
        SampledNeighborhood nb =
            sample_neighborhood(bundle.model, bundle.ld, fv_count, 0, edges,
                                mix_seed(seed, seed_stream::gamma_calibration, 1, i));
        if (nb.alert_count == 0) return;
        cal_scores[i] = shape_score(nb.accs[0].to_histogram(), ref.reference).value;
    });
    std::vector<double> cal;
    for (double s : cal_scores) {
        if (s >= 0.0) cal.push_back(s);
    }
    GammaThreshold g = calibrate_gamma(cal, percentile);
    result.gamma = g.gamma;

    result.cluster_benign.resize(n_eval);
    result.cluster_malicious.resize(n_eval);
    result.shape_benign.resize(n_eval);
    result.shape_malicious.resize(n_eval);
    result.verdict_benign.resize(n_eval);
    result.verdict_malicious.resize(n_eval);

    auto eval_block = [&](std::uint64_t n_mal, std::uint64_t tag, std::vector<double>& clusters,
                          std::vector<double>& shapes, std::vector<double>& verdicts) {
        parallel_for(n_eval, threads, [&](std::size_t i) {
            SampledNeighborhood nb =
                sample_neighborhood(bundle.model, bundle.ld, fv_count, n_mal, edges,
                                    mix_seed(seed, seed_stream::evaluation, tag, i));
            if (nb.alert_count == 0) {
                throw std::runtime_error("cluster: neighborhood with no alerts (fv_count too small)");
            }
            clusters[i] =
                cluster_gd_score(nb.alert_fv_sum, nb.alert_count, ref.training_alert_centroid);
            GlobalVerdict v = shape_gd_classify_binned("nb", nb.accs[0], nb.fv_count,
                                                       ref.reference, g, min_fvs);
            if (v.decision == GlobalDecision::NoDecision) {
                throw std::runtime_error("cluster: unexpected NoDecision verdict");
            }
            shapes[i] = v.score;
            verdicts[i] = v.decision == GlobalDecision::Malicious ? 1.0 : 0.0;
        });
    };
    eval_block(0, 31, result.cluster_benign, result.shape_benign, result.verdict_benign);
    eval_block(n_infected_fvs, 32, result.cluster_malicious, result.shape_malicious,
               result.verdict_malicious);

    result.cluster_auc = compute_roc(result.cluster_malicious, result.cluster_benign).auc;
    result.shape_verdict_auc = compute_roc(result.verdict_malicious, result.verdict_benign).auc;
    result.shape_score_auc = compute_roc(result.shape_malicious, result.shape_benign).auc;
    return result;
}

inline void write_cluster_auc_outputs(const ClusterAucResult& result, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    CsvWriter rows(out_dir + "/cluster_scores.csv",
                   {"set", "index", "cluster_score", "shape_score", "verdict"});
    for (std::size_t i = 0; i < result.cluster_benign.size(); ++i) {
        rows.cell("benign")
            .cell(i)
            .cell(result.cluster_benign[i])
            .cell(result.shape_benign[i])
            .cell(result.verdict_benign[i]);
        rows.end_row();
    }
    for (std::size_t i = 0; i < result.cluster_malicious.size(); ++i) {
        rows.cell("infected")
            .cell(i)
            .cell(result.cluster_malicious[i])
            .cell(result.shape_malicious[i])
            .cell(result.verdict_malicious[i]);
        rows.end_row();
    }
    CsvWriter summary(out_dir + "/cluster_summary.csv",
                      {"infected_fraction", "cluster_auc", "shape_verdict_auc",
                       "shape_score_auc", "gamma"});
    summary.cell(result.infected_fraction)
        .cell(result.cluster_auc)
        .cell(result.shape_verdict_auc)
        .cell(result.shape_score_auc)
        .cell(result.gamma);
    summary.end_row();
}

}  // namespace shapegd
