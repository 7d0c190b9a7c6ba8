#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "attack.hpp"
#include "config.hpp"
#include "experiments.hpp"
#include "global.hpp"
#include "histogram.hpp"
#include "neighborhood.hpp"
#include "rng.hpp"
#include "synthetic.hpp"

namespace shapegd {

// ---------------------------------------------------------------------------
// Detection sweep: scenario runs are simulated once, recording every scoring
// instant's per-group ShapeScore; gamma is then calibrated from the benign
// runs and detection outcomes derived by replaying the recorded scores
// against it. score < 0 marks an instant that produced no decision (window
// below the FV-count floor or no alerts).

struct ScoreCell {
    double score = -1.0;
    std::uint64_t fv_count = 0;
};

// Per-group-count partition variant of one sweep point.
struct SweepVariant {
    std::uint32_t groups = 1;
    PartitionSpec partition;
};

inline std::vector<SweepVariant> make_sweep_variants(std::uint32_t entity_count,
                                                     const std::vector<std::uint64_t>& counts) {
    std::vector<std::uint32_t> ids(entity_count);
    for (std::uint32_t i = 0; i < entity_count; ++i) ids[i] = i;
    std::vector<SweepVariant> variants;
    for (std::uint64_t k : counts) {
        SweepVariant v;
        v.groups = static_cast<std::uint32_t>(k);
        v.partition = make_partition(ids, v.groups);
        variants.push_back(std::move(v));
    }
    return variants;
}

// One simulated run: [variant][instant][group] score cells plus the ground
// truth needed to read off detection outcomes afterwards.
struct RunRecord {
    std::vector<std::vector<std::vector<ScoreCell>>> cells;
    std::vector<double> instant_times;
    InfectionState infections;
    double attack_start = 0.0;
};

struct DetectionOutcome {
    bool detected = false;
    double time = 0.0;
    std::uint64_t infected = 0;
    double score = 0.0;
    std::uint64_t fv_count = 0;
    std::uint32_t group = 0;
};

// Shared scaffolding for both scenarios.
struct DetectionContext {
    ModelBundle bundle;
    ReferenceSetup ref;
    double percentile = 0.99;
    std::uint64_t min_fvs = 15000;
    double fv_rate = 1.0;
    unsigned threads = 1;
    std::uint64_t seed = 1;
};

inline DetectionContext make_detection_context(const Config& cfg) {
    DetectionContext ctx;
    ctx.seed = cfg.get_u64("experiment", "seed", 1);
    ctx.threads = resolve_threads(cfg.get_u64("experiment", "threads", 0));
    ctx.bundle = prepare_model(cfg, ctx.seed);
    const std::size_t bins = cfg.get_u64("shape", "bins", 50);
    const std::uint64_t ref_budget = cfg.get_u64("shape", "reference_fv_budget", 15000);
    const std::size_t ref_min_alerts = cfg.get_u64("shape", "reference_min_alerts", 100);
    ctx.percentile = cfg.get_double("shape", "gamma_percentile", 0.99);
    ctx.min_fvs = cfg.get_u64("shape", "min_fvs", 15000);
    ctx.fv_rate = cfg.get_double("shape", "fv_rate", 1.0);
    if (!(ctx.fv_rate >= 1.0) || ctx.fv_rate != std::floor(ctx.fv_rate)) {
        throw std::runtime_error("shape: fv_rate must be a whole number of FVs per second");
    }
    ctx.ref = train_reference_from_model(ctx.bundle, ref_budget, ref_min_alerts, bins, ctx.seed);
    return ctx;
}

// ---------------------------------------------------------------------------
// Phishing: one window per run, all events at t = 0, every universe node
// emits fv_rate FVs per second; scoring every score_interval seconds.

inline RunRecord simulate_phishing_window(const PhishingScenario& scenario, double ntw,
                                          std::uint64_t score_interval,
                                          const std::vector<SweepVariant>& variants,
                                          const DetectionContext& ctx,
                                          std::uint64_t window_seed) {
    PhishingTrace trace = generate_phishing_trace(scenario, ntw, window_seed);

    std::vector<BatchEngine> engines;
    engines.reserve(variants.size());
    for (const auto& v : variants) {
        BatchEngineConfig ec;
        ec.template_type = TemplateType::Phishing;
        ec.ntw = ntw;
        ec.partition = v.partition;
        ec.edges = &ctx.ref.reference.histogram.bin_edges;
        ec.fv_rate = ctx.fv_rate;
        ec.retain_raw = false;
        ec.buffer_alerts = false;
        engines.emplace_back(std::move(ec));
    }
    for (const auto& ev : trace.events) {
        for (auto& e : engines) e.ingest_event(ev);
    }

    RunRecord rec;
    rec.infections = std::move(trace.infections);
    rec.attack_start = 0.0;
    const std::uint64_t horizon = static_cast<std::uint64_t>(ntw);
    for (std::uint64_t t = score_interval; t <= horizon; t += score_interval) {
        rec.instant_times.push_back(static_cast<double>(t));
    }
    if (rec.instant_times.empty() || rec.instant_times.back() != ntw) {
        rec.instant_times.push_back(ntw);
    }
    rec.cells.resize(variants.size());
    for (std::size_t v = 0; v < variants.size(); ++v) {
        rec.cells[v].assign(rec.instant_times.size(),
                            std::vector<ScoreCell>(variants[v].groups));
    }

    std::vector<double> infection_time(scenario.universe_size,
                                       std::numeric_limits<double>::infinity());
    for (const auto& [node, t] : rec.infections.times()) {
        if (node < infection_time.size()) infection_time[node] = t;
    }
    AlertFV alert;
    const unsigned draws = static_cast<unsigned>(ctx.fv_rate);
    std::size_t instant_idx = 0;
    for (std::uint64_t sec = 0; sec < horizon; ++sec) {
        const double ts = static_cast<double>(sec);
        for (NodeId node = 0; node < scenario.universe_size; ++node) {
            Rng rng(mix_seed(window_seed, seed_stream::fv_stream, node, sec));
            ClassLabel label = infection_time[node] <= ts ? ClassLabel::Malicious
                                                          : ClassLabel::Benign;
            for (unsigned d = 0; d < draws; ++d) {
                sample_fv_into(ctx.bundle.model, label, rng, alert.fv);
                if (classify(ctx.bundle.ld, alert.fv) != ClassLabel::Malicious) continue;
                alert.node_id = node;
                alert.timestamp = ts;
                alert.true_label = label;
                for (auto& e : engines) e.ingest_alert(alert);
            }
        }
        const double now = static_cast<double>(sec + 1);
        if (instant_idx < rec.instant_times.size() && now >= rec.instant_times[instant_idx]) {
            for (std::size_t v = 0; v < variants.size(); ++v) {
                for (const Neighborhood& nb : engines[v].materialize(now)) {
                    ScoreCell& cell = rec.cells[v][instant_idx][nb.partition_label];
                    cell.fv_count = nb.total_fv_count;
                    if (nb.total_fv_count < ctx.min_fvs || nb.alert_count() == 0) continue;
                    cell.score = shape_score(nb.acc.to_histogram(), ctx.ref.reference).value;
                }
            }
            ++instant_idx;
        }
    }
    return rec;
}

// ---------------------------------------------------------------------------
// Waterhole: Poisson access trace over the full horizon, sliding-window
// engine ticked once per slide step, every client emits fv_rate FVs per
// second.

inline RunRecord simulate_waterhole_run(const WaterholeScenario& scenario, double horizon,
                                        double ntw, double slide,
                                        const std::vector<SweepVariant>& variants,
                                        const DetectionContext& ctx, std::uint64_t run_seed) {
    WaterholeTrace trace = generate_waterhole_trace(scenario, horizon, run_seed);

    std::vector<OnlineEngine> engines;
    engines.reserve(variants.size());
    for (const auto& v : variants) {
        OnlineEngineConfig ec;
        ec.template_type = TemplateType::Waterhole;
        ec.ntw = ntw;
        ec.slide = slide;
        ec.partition = v.partition;
        ec.edges = &ctx.ref.reference.histogram.bin_edges;
        ec.fv_rate = ctx.fv_rate;
        engines.emplace_back(std::move(ec));
    }

    RunRecord rec;
    rec.infections = std::move(trace.infections);
    rec.attack_start = trace.compromise_time;
    const std::uint64_t ticks = static_cast<std::uint64_t>(std::floor(horizon / slide));
    rec.instant_times.reserve(ticks);
    for (std::uint64_t i = 1; i <= ticks; ++i) {
        rec.instant_times.push_back(static_cast<double>(i) * slide);
    }
    rec.cells.resize(variants.size());
    for (std::size_t v = 0; v < variants.size(); ++v) {
        rec.cells[v].assign(rec.instant_times.size(),
                            std::vector<ScoreCell>(variants[v].groups));
    }

    std::vector<double> infection_time(scenario.client_population,
                                       std::numeric_limits<double>::infinity());
    for (const auto& [node, t] : rec.infections.times()) {
        if (node < infection_time.size()) infection_time[node] = t;
    }
    AlertFV alert;
    const unsigned draws = static_cast<unsigned>(ctx.fv_rate);
    std::size_t event_idx = 0;
    for (std::size_t i = 0; i < rec.instant_times.size(); ++i) {
        const double now = rec.instant_times[i];
        while (event_idx < trace.events.size() &&
               trace.events[event_idx].timestamp <= now) {
            for (auto& e : engines) e.ingest_event(trace.events[event_idx]);
            ++event_idx;
        }
        const std::uint64_t sec = static_cast<std::uint64_t>(now);
        for (NodeId node = 0; node < scenario.client_population; ++node) {
            Rng rng(mix_seed(run_seed, seed_stream::fv_stream, node, sec));
            ClassLabel label = infection_time[node] <= now ? ClassLabel::Malicious
                                                           : ClassLabel::Benign;
            for (unsigned d = 0; d < draws; ++d) {
                sample_fv_into(ctx.bundle.model, label, rng, alert.fv);
                if (classify(ctx.bundle.ld, alert.fv) != ClassLabel::Malicious) continue;
                alert.node_id = node;
                alert.timestamp = now;
                alert.true_label = label;
                for (auto& e : engines) e.ingest_alert(alert);
            }
        }
        for (std::size_t v = 0; v < variants.size(); ++v) {
            for (const ScoringState& st : engines[v].tick(now)) {
                ScoreCell& cell = rec.cells[v][i][st.group];
                cell.fv_count = st.total_fv_count;
                if (st.total_fv_count < ctx.min_fvs || st.alert_count == 0) continue;
                cell.score = shape_score(st.histogram, ctx.ref.reference).value;
            }
        }
    }
    return rec;
}

// ---------------------------------------------------------------------------
// Post-processing: gamma from benign runs, outcomes from attack runs.

// Benign-side false-alarm rate at gamma. Phishing treats the window as the
// unit (a window alarms if any instant crosses); waterhole treats each
// scoring instant as the unit.
inline double benign_alarm_rate(const std::vector<RunRecord>& benign, std::size_t variant,
                                double gamma, bool per_window) {
    std::uint64_t alarms = 0, units = 0;
    for (const auto& rec : benign) {
        bool window_hit = false;
        bool window_scored = false;
        for (const auto& instant : rec.cells[variant]) {
            bool instant_scored = false, instant_hit = false;
            for (const auto& cell : instant) {
                if (cell.score < 0.0) continue;
                instant_scored = true;
                if (cell.score > gamma) instant_hit = true;
            }
            if (per_window) {
                window_scored = window_scored || instant_scored;
                window_hit = window_hit || instant_hit;
            } else if (instant_scored) {
                ++units;
                if (instant_hit) ++alarms;
            }
        }
        if (per_window && window_scored) {
            ++units;
            if (window_hit) ++alarms;
        }
    }
    return units == 0 ? 0.0 : static_cast<double>(alarms) / static_cast<double>(units);
}

// Calibration scores for one variant. per_window collapses each benign run
// to its maximum (batch windows alarm at most once); otherwise every scored
// instant contributes.
inline std::vector<double> collect_calibration_scores(const std::vector<RunRecord>& benign,
                                                      std::size_t variant, bool per_window) {
    std::vector<double> out;
    for (const auto& rec : benign) {
        double window_max = -1.0;
        for (const auto& instant : rec.cells[variant]) {
            for (const auto& cell : instant) {
                if (cell.score < 0.0) continue;
                if (per_window) {
                    window_max = std::max(window_max, cell.score);
                } else {
                    out.push_back(cell.score);
                }
            }
        }
        if (per_window && window_max >= 0.0) out.push_back(window_max);
    }
    return out;
}

// First instant after attack_start whose score crosses gamma.
inline DetectionOutcome derive_outcome(const RunRecord& rec, std::size_t variant, double gamma) {
    DetectionOutcome out;
    for (std::size_t i = 0; i < rec.instant_times.size(); ++i) {
        const double t = rec.instant_times[i];
        if (t <= rec.attack_start) continue;
        const auto& instant = rec.cells[variant][i];
        for (std::uint32_t g = 0; g < instant.size(); ++g) {
            const ScoreCell& cell = instant[g];
            if (cell.score < 0.0 || cell.score <= gamma) continue;
            out.detected = true;
            out.time = t;
            out.infected = rec.infections.count_infected_at(t);
            out.score = cell.score;
            out.fv_count = cell.fv_count;
            out.group = g;
            return out;
        }
    }
    return out;
}

struct SweepPointSummary {
    std::string scenario;
    double ntw = 0.0;
    std::uint32_t groups = 1;
    double infection_param = 1.0;
    std::size_t repetitions = 0;
    std::size_t detected = 0;
    std::size_t censored = 0;
    double gamma = 0.0;
    double benign_alarm_rate = 0.0;
    double median_infected = 0.0, p01_infected = 0.0, p99_infected = 0.0;
    double median_time = 0.0, p01_time = 0.0, p99_time = 0.0;
    std::vector<DetectionOutcome> outcomes;
};

inline void summarize_outcomes(SweepPointSummary& point) {
    std::vector<double> infected, times;
    for (const auto& o : point.outcomes) {
        if (!o.detected) continue;
        infected.push_back(static_cast<double>(o.infected));
        times.push_back(o.time);
    }
    point.repetitions = point.outcomes.size();
    point.detected = infected.size();
    point.censored = point.repetitions - point.detected;
    if (infected.empty()) return;
    point.median_infected = median(infected);
    point.p01_infected = percentile_nearest_rank(infected, 0.01);
    point.p99_infected = percentile_nearest_rank(infected, 0.99);
    point.median_time = median(times);
    point.p01_time = percentile_nearest_rank(times, 0.01);
    point.p99_time = percentile_nearest_rank(times, 0.99);
}

struct DetectionSweepResult {
    std::vector<SweepPointSummary> points;
    std::vector<std::string> verdict_lines;
    OperatingPoint ld_measured;
};

inline DetectionSweepResult run_phishing_sweep(const Config& cfg, const DetectionContext& ctx) {
    PhishingScenario scenario;
    scenario.thread_count =
        static_cast<std::uint32_t>(cfg.get_u64("phishing", "thread_count", 50));
    scenario.recipients_per_thread =
        static_cast<std::uint32_t>(cfg.get_u64("phishing", "recipients_per_thread", 100));
    scenario.malicious_thread_count =
        static_cast<std::uint32_t>(cfg.get_u64("phishing", "malicious_threads", 1));
    scenario.universe_size =
        static_cast<std::uint32_t>(cfg.get_u64("phishing", "universe", 1086));
    scenario.click_rate = cfg.get_double("phishing", "click_rate", 1.0);
    scenario.open_time_model.mu = cfg.get_double("phishing", "open_mu", 7.9445);
    scenario.open_time_model.sigma = cfg.get_double("phishing", "open_sigma", 1.7768);

    const std::vector<std::uint64_t> ntw_values = cfg.get_u64_list("phishing", "ntw", {3600});
    const std::vector<std::uint64_t> group_counts =
        cfg.get_u64_list("phishing", "group_counts", {1, 50});
    const std::size_t reps = cfg.get_u64("phishing", "repetitions", 50);
    const std::size_t cal_windows = cfg.get_u64("phishing", "calibration_windows", 100);
    const std::uint64_t score_interval = cfg.get_u64("phishing", "score_interval", 60);
    if (score_interval == 0) throw std::runtime_error("phishing: score_interval must be > 0");

    std::vector<SweepVariant> variants = make_sweep_variants(scenario.thread_count, group_counts);
    PhishingScenario benign_scenario = scenario;
    benign_scenario.click_rate = 0.0;

    DetectionSweepResult result;
    result.ld_measured = ctx.bundle.measured;
    for (std::size_t ni = 0; ni < ntw_values.size(); ++ni) {
        const double ntw = static_cast<double>(ntw_values[ni]);
        std::vector<RunRecord> benign(cal_windows), attack(reps);
        parallel_for(cal_windows + reps, ctx.threads, [&](std::size_t i) {
            if (i < cal_windows) {
                benign[i] = simulate_phishing_window(
                    benign_scenario, ntw, score_interval, variants, ctx,
                    mix_seed(ctx.seed, seed_stream::gamma_calibration, ni, i));
            } else {
                std::size_t r = i - cal_windows;
                attack[r] = simulate_phishing_window(
                    scenario, ntw, score_interval, variants, ctx,
                    mix_seed(ctx.seed, seed_stream::evaluation, ni, r));
            }
        });
        for (std::size_t v = 0; v < variants.size(); ++v) {
            std::vector<double> cal = collect_calibration_scores(benign, v, true);
            GammaThreshold g = calibrate_gamma(cal, ctx.percentile);
            SweepPointSummary point;
            point.scenario = "phishing";
            point.ntw = ntw;
            point.groups = variants[v].groups;
            point.infection_param = scenario.click_rate;
            point.gamma = g.gamma;
            point.benign_alarm_rate = benign_alarm_rate(benign, v, g.gamma, true);
            for (std::size_t r = 0; r < reps; ++r) {
                DetectionOutcome o = derive_outcome(attack[r], v, g.gamma);
                if (o.detected) {
                    GlobalVerdict verdict;
                    verdict.neighborhood_id =
                        "r" + std::to_string(r) + ":g" + std::to_string(o.group);
                    verdict.decision = GlobalDecision::Malicious;
                    verdict.score = o.score;
                    verdict.eligible_fv_count = o.fv_count;
                    result.verdict_lines.push_back(verdict_record(0.0, verdict, "shape"));
                }
                point.outcomes.push_back(o);
            }
            summarize_outcomes(point);
            result.points.push_back(std::move(point));
        }
    }
    return result;
}

inline DetectionSweepResult run_waterhole_sweep(const Config& cfg, const DetectionContext& ctx) {
    WaterholeScenario scenario;
    scenario.server_count = static_cast<std::uint32_t>(cfg.get_u64("waterhole", "servers", 50));
    scenario.compromised_server =
        static_cast<std::uint32_t>(cfg.get_u64("waterhole", "compromised_server", 0));
    scenario.infection_probability =
        cfg.get_double("waterhole", "infection_probability", 1.0);
    scenario.min_request_rate = cfg.get_double("waterhole", "min_rate", 0.5);
    scenario.max_request_rate = cfg.get_double("waterhole", "max_rate", 43.7);
    scenario.client_population =
        static_cast<std::uint32_t>(cfg.get_u64("waterhole", "population", 50000));

    const std::vector<std::uint64_t> ntw_values = cfg.get_u64_list("waterhole", "ntw", {6});
    const std::vector<std::uint64_t> group_counts =
        cfg.get_u64_list("waterhole", "group_counts", {1});
    const double horizon = cfg.get_double("waterhole", "horizon", 300.0);
    const double slide = cfg.get_double("waterhole", "slide", 1.0);
    const std::size_t reps = cfg.get_u64("waterhole", "repetitions", 50);
    const std::size_t cal_runs = cfg.get_u64("waterhole", "calibration_runs", 3);

    std::vector<SweepVariant> variants = make_sweep_variants(scenario.server_count, group_counts);
    WaterholeScenario benign_scenario = scenario;
    benign_scenario.infection_probability = 0.0;

    DetectionSweepResult result;
    result.ld_measured = ctx.bundle.measured;
    for (std::size_t ni = 0; ni < ntw_values.size(); ++ni) {
        const double ntw = static_cast<double>(ntw_values[ni]);
        std::vector<RunRecord> benign(cal_runs), attack(reps);
        parallel_for(cal_runs + reps, ctx.threads, [&](std::size_t i) {
            if (i < cal_runs) {
                benign[i] = simulate_waterhole_run(
                    benign_scenario, horizon, ntw, slide, variants, ctx,
                    mix_seed(ctx.seed, seed_stream::gamma_calibration, ni, i));
            } else {
                std::size_t r = i - cal_runs;
                attack[r] = simulate_waterhole_run(
                    scenario, horizon, ntw, slide, variants, ctx,
                    mix_seed(ctx.seed, seed_stream::evaluation, ni, r));
            }
        });
        for (std::size_t v = 0; v < variants.size(); ++v) {
            std::vector<double> cal = collect_calibration_scores(benign, v, false);
            GammaThreshold g = calibrate_gamma(cal, ctx.percentile);
            SweepPointSummary point;
            point.scenario = "waterhole";
            point.ntw = ntw;
            point.groups = variants[v].groups;
            point.infection_param = scenario.infection_probability;
            point.gamma = g.gamma;
            point.benign_alarm_rate = benign_alarm_rate(benign, v, g.gamma, false);
            for (std::size_t r = 0; r < reps; ++r) {
                DetectionOutcome o = derive_outcome(attack[r], v, g.gamma);
                if (o.detected) {
                    GlobalVerdict verdict;
                    verdict.neighborhood_id =
                        "r" + std::to_string(r) + ":g" + std::to_string(o.group);
                    verdict.decision = GlobalDecision::Malicious;
                    verdict.score = o.score;
                    verdict.eligible_fv_count = o.fv_count;
                    result.verdict_lines.push_back(
                        verdict_record(o.time - ntw, verdict, "shape"));
                }
                point.outcomes.push_back(o);
            }
            summarize_outcomes(point);
            result.points.push_back(std::move(point));
        }
    }
    return result;
}

inline DetectionSweepResult run_detection_sweep(const Config& cfg) {
    DetectionContext ctx = make_detection_context(cfg);
    const std::string scenario = cfg.require_string("experiment", "scenario");
    if (scenario == "phishing") return run_phishing_sweep(cfg, ctx);
    if (scenario == "waterhole") return run_waterhole_sweep(cfg, ctx);
    throw std::runtime_error("detect-sweep: unknown scenario " + scenario);
}

inline void write_detection_outputs(const DetectionSweepResult& result,
                                    const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    CsvWriter summary(out_dir + "/sweep_summary.csv",
                      {"scenario", "ntw", "groups", "infection_param", "repetitions",
                       "detected", "censored", "gamma", "benign_alarm_rate",
                       "median_infected", "p01_infected", "p99_infected", "median_time",
                       "p01_time", "p99_time"});
    for (const auto& p : result.points) {
        summary.cell(p.scenario)
            .cell(p.ntw)
            .cell(p.groups)
            .cell(p.infection_param)
            .cell(p.repetitions)
            .cell(p.detected)
            .cell(p.censored)
            .cell(p.gamma)
            .cell(p.benign_alarm_rate)
            .cell(p.median_infected)
            .cell(p.p01_infected)
            .cell(p.p99_infected)
            .cell(p.median_time)
            .cell(p.p01_time)
            .cell(p.p99_time);
        summary.end_row();
    }
    CsvWriter rows(out_dir + "/detections.csv",
                   {"scenario", "ntw", "groups", "rep", "detected", "time", "infected",
                    "score", "group"});
    for (const auto& p : result.points) {
        for (std::size_t r = 0; r < p.outcomes.size(); ++r) {
            const auto& o = p.outcomes[r];
            rows.cell(p.scenario)
                .cell(p.ntw)
                .cell(p.groups)
                .cell(r)
                .cell(o.detected ? "yes" : "no")
                .cell(o.detected ? o.time : 0.0)
                .cell(o.infected)
                .cell(o.detected ? o.score : 0.0)
                .cell(o.group);
            rows.end_row();
        }
    }
    std::ofstream verdicts(out_dir + "/verdicts.log");
    if (!verdicts) throw std::runtime_error("cannot open " + out_dir + "/verdicts.log");
    for (const auto& line : result.verdict_lines) verdicts << line << '\n';
}

}  // namespace shapegd
