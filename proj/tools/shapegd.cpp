#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "shapegd/attack.hpp"
#include "shapegd/config.hpp"
#include "shapegd/detection.hpp"
#include "shapegd/experiments.hpp"
#include "shapegd/roc.hpp"

namespace {

shapegd::Config load_config(const std::string& path, std::uint64_t seed_override,
                            bool has_seed_override) {
    shapegd::Config cfg = shapegd::Config::parse_file(path);
    if (has_seed_override) {
        cfg.set("experiment", "seed", std::to_string(seed_override));
    }
    return cfg;
}

std::vector<double> load_score_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open score file " + path);
    std::vector<double> scores;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            std::size_t used = 0;
            double v = std::stod(line, &used);
            while (used < line.size() && std::isspace(static_cast<unsigned char>(line[used]))) {
                ++used;
            }
            if (used != line.size()) throw std::invalid_argument("trailing characters");
            scores.push_back(v);
        } catch (const std::exception&) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected one score per line");
        }
    }
    return scores;
}

int cmd_gen_trace(const shapegd::Config& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const std::string scenario = cfg.require_string("experiment", "scenario");
    const std::uint64_t seed = cfg.get_u64("experiment", "seed", 1);
    if (scenario == "phishing") {
        shapegd::PhishingScenario s;
        s.thread_count =
            static_cast<std::uint32_t>(cfg.get_u64("phishing", "thread_count", 50));
        s.recipients_per_thread =
            static_cast<std::uint32_t>(cfg.get_u64("phishing", "recipients_per_thread", 100));
        s.malicious_thread_count =
            static_cast<std::uint32_t>(cfg.get_u64("phishing", "malicious_threads", 1));
        s.universe_size = static_cast<std::uint32_t>(cfg.get_u64("phishing", "universe", 1086));
        s.click_rate = cfg.get_double("phishing", "click_rate", 1.0);
        s.open_time_model.mu = cfg.get_double("phishing", "open_mu", 7.9445);
        s.open_time_model.sigma = cfg.get_double("phishing", "open_sigma", 1.7768);
        const double horizon =
            static_cast<double>(cfg.get_u64_list("phishing", "ntw", {3600}).front());
        shapegd::PhishingTrace trace = shapegd::generate_phishing_trace(s, horizon, seed);
        shapegd::save_trace(out_dir + "/trace.csv", trace.events);
        shapegd::save_infections(out_dir + "/infections.csv", trace.infections);
        std::printf("gen-trace: phishing, %zu events, %zu infections -> %s\n",
                    trace.events.size(), trace.infections.size(), out_dir.c_str());
        return 0;
    }
    if (scenario == "waterhole") {
        shapegd::WaterholeScenario s;
        s.server_count = static_cast<std::uint32_t>(cfg.get_u64("waterhole", "servers", 50));
        s.compromised_server =
            static_cast<std::uint32_t>(cfg.get_u64("waterhole", "compromised_server", 0));
        s.infection_probability = cfg.get_double("waterhole", "infection_probability", 1.0);
        s.min_request_rate = cfg.get_double("waterhole", "min_rate", 0.5);
        s.max_request_rate = cfg.get_double("waterhole", "max_rate", 43.7);
        s.client_population =
            static_cast<std::uint32_t>(cfg.get_u64("waterhole", "population", 50000));
        const double horizon = cfg.get_double("waterhole", "horizon", 300.0);
        shapegd::WaterholeTrace trace = shapegd::generate_waterhole_trace(s, horizon, seed);
        shapegd::save_trace(out_dir + "/trace.csv", trace.events);
        shapegd::save_infections(out_dir + "/infections.csv", trace.infections);
        std::printf("gen-trace: waterhole, %zu events, %zu infections, compromise at %.3f -> %s\n",
                    trace.events.size(), trace.infections.size(), trace.compromise_time,
                    out_dir.c_str());
        return 0;
    }
    throw std::runtime_error("gen-trace: unknown scenario " + scenario);
}

int cmd_train_ref(const shapegd::Config& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const std::uint64_t seed = cfg.get_u64("experiment", "seed", 1);
    const unsigned threads =
        shapegd::resolve_threads(cfg.get_u64("experiment", "threads", 0));
    shapegd::ModelBundle bundle = shapegd::prepare_model(cfg, seed);
    const std::size_t bins = cfg.get_u64("shape", "bins", 50);
    const std::uint64_t budget = cfg.get_u64("shape", "reference_fv_budget", 15000);
    const std::size_t min_alerts = cfg.get_u64("shape", "reference_min_alerts", 100);
    const double percentile = cfg.get_double("shape", "gamma_percentile", 0.99);
    shapegd::ReferenceSetup ref =
        shapegd::train_reference_from_model(bundle, budget, min_alerts, bins, seed);

    const std::uint64_t n_cal = cfg.get_u64("pure_shape", "calibration_neighborhoods", 500);
    const std::uint64_t nb_fvs = cfg.get_u64("pure_shape", "neighborhood_fvs", 15000);
    std::vector<const shapegd::BinEdges*> edges = {&ref.reference.histogram.bin_edges};
    std::vector<double> scores(n_cal, -1.0);
    shapegd::parallel_for(n_cal, threads, [&](std::size_t i) {
        shapegd::SampledNeighborhood nb = shapegd::sample_neighborhood(
            bundle.model, bundle.ld, nb_fvs, 0, edges,
            shapegd::mix_seed(seed, shapegd::seed_stream::gamma_calibration, 7, i));
        if (nb.alert_count == 0) return;
        scores[i] = shapegd::shape_score(nb.accs[0].to_histogram(), ref.reference).value;
    });
    std::vector<double> cal;
    for (double s : scores) {
        if (s >= 0.0) cal.push_back(s);
    }
    shapegd::GammaThreshold g = shapegd::calibrate_gamma(cal, percentile);
    const std::string path = out_dir + "/reference.txt";
    shapegd::save_reference(path, ref.reference, g);
    std::printf("train-ref: %llu alert FVs over %llu training FVs, gamma %.6g -> %s\n",
                static_cast<unsigned long long>(ref.reference.alert_count),
                static_cast<unsigned long long>(ref.reference.training_fv_count), g.gamma,
                path.c_str());
    return 0;
}

int cmd_pure_shape(const shapegd::Config& cfg, const std::string& out_dir) {
    shapegd::PureShapeResult result = shapegd::run_pure_shape_experiment(cfg);
    shapegd::write_pure_shape_outputs(result, out_dir);
    const auto& v = result.variants.front();
    std::printf("pure-shape: bins %zu, fp %.4f, tp %.4f, gamma %.6g -> %s\n", v.bins, v.fp_rate,
                v.tp_rate, v.gamma, out_dir.c_str());
    return 0;
}

int cmd_detect_sweep(const shapegd::Config& cfg, const std::string& out_dir) {
    shapegd::DetectionSweepResult result = shapegd::run_detection_sweep(cfg);
    shapegd::write_detection_outputs(result, out_dir);
    const auto& p = result.points.front();
    std::printf(
        "detect-sweep: %s, %zu points, first point ntw %g groups %u: %zu/%zu detected, "
        "median infected %.1f -> %s\n",
        p.scenario.c_str(), result.points.size(), p.ntw, p.groups, p.detected, p.repetitions,
        p.median_infected, out_dir.c_str());
    return 0;
}

int cmd_count_fragility(const shapegd::Config& cfg, const std::string& out_dir) {
    shapegd::CountFragilityResult result = shapegd::run_count_fragility(cfg);
    shapegd::write_count_fragility_outputs(result, out_dir);
    std::printf(
        "count-fragility: %zu grid points, shape fp %.4f tp %.4f at infection %.4g -> %s\n",
        result.points.size(), result.shape_fp, result.shape_tp, result.infected_fraction,
        out_dir.c_str());
    return 0;
}

int cmd_cluster_auc(const shapegd::Config& cfg, const std::string& out_dir) {
    shapegd::ClusterAucResult result = shapegd::run_cluster_auc(cfg);
    shapegd::write_cluster_auc_outputs(result, out_dir);
    std::printf("cluster-auc: cluster %.4f, shape verdict %.4f at infection %.4g -> %s\n",
                result.cluster_auc, result.shape_verdict_auc, result.infected_fraction,
                out_dir.c_str());
    return 0;
}

int cmd_roc(const std::string& pos_path, const std::string& neg_path,
            const std::string& out_dir) {
    std::vector<double> pos = load_score_file(pos_path);
    std::vector<double> neg = load_score_file(neg_path);
    shapegd::RocCurve roc = shapegd::compute_roc(pos, neg);
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        shapegd::CsvWriter out(out_dir + "/roc.csv", {"fp_rate", "tp_rate"});
        for (const auto& pt : roc.points) {
            out.cell(pt.first).cell(pt.second);
            out.end_row();
        }
    }
    std::printf("roc: auc %.6f over %zu positives, %zu negatives, %zu points\n", roc.auc,
                pos.size(), neg.size(), roc.points.size());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Shape-GD neighborhood malware detection simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir, pos_path, neg_path, roc_out;
    std::uint64_t seed_override = 0;

    auto add_common = [&](CLI::App* sub, bool out_required) {
        sub->add_option("--config", config_path, "experiment config file")
            ->required()
            ->check(CLI::ExistingFile);
        auto* out = sub->add_option("--out", out_dir, "output directory");
        if (out_required) out->required();
        sub->add_option("--seed", seed_override, "override the config seed");
    };

    CLI::App* gen = app.add_subcommand("gen-trace", "generate a scenario trace + infections");
    add_common(gen, true);
    CLI::App* train = app.add_subcommand("train-ref", "train a reference histogram + gamma");
    add_common(train, true);
    CLI::App* pure = app.add_subcommand("pure-shape", "benign vs malicious neighborhood scores");
    add_common(pure, true);
    CLI::App* sweep = app.add_subcommand("detect-sweep", "scenario detection sweep");
    add_common(sweep, true);
    CLI::App* fragility = app.add_subcommand("count-fragility", "alert-count baseline vs size error");
    add_common(fragility, true);
    CLI::App* cluster = app.add_subcommand("cluster-auc", "centroid-distance baseline AUC");
    add_common(cluster, true);
    CLI::App* roc = app.add_subcommand("roc", "ROC/AUC from score files");
    roc->add_option("--pos", pos_path, "positive scores, one per line")
        ->required()
        ->check(CLI::ExistingFile);
    roc->add_option("--neg", neg_path, "negative scores, one per line")
        ->required()
        ->check(CLI::ExistingFile);
    roc->add_option("--out", roc_out, "optional directory for roc.csv");

    CLI11_PARSE(app, argc, argv);

    try {
        if (roc->parsed()) return cmd_roc(pos_path, neg_path, roc_out);
        const bool has_seed = app.get_subcommands().front()->count("--seed") > 0;
        shapegd::Config cfg = load_config(config_path, seed_override, has_seed);
        if (gen->parsed()) return cmd_gen_trace(cfg, out_dir);
        if (train->parsed()) return cmd_train_ref(cfg, out_dir);
        if (pure->parsed()) return cmd_pure_shape(cfg, out_dir);
        if (sweep->parsed()) return cmd_detect_sweep(cfg, out_dir);
        if (fragility->parsed()) return cmd_count_fragility(cfg, out_dir);
        if (cluster->parsed()) return cmd_cluster_auc(cfg, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    std::cerr << "error: no subcommand handled\n";
    return 1;
}
