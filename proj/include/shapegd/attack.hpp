#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "core.hpp"
#include "neighborhood.hpp"
#include "rng.hpp"

namespace shapegd {

// Node infection times for one run. Monotone: infect() keeps the earliest
// time, nothing is ever removed.
class InfectionState {
public:
    void infect(NodeId node, double time) {
        auto [it, inserted] = times_.try_emplace(node, time);
        if (!inserted && time < it->second) it->second = time;
        sorted_dirty_ = true;
    }

    bool infected(NodeId node, double at) const {
        auto it = times_.find(node);
        return it != times_.end() && it->second <= at;
    }

    std::size_t size() const { return times_.size(); }

    std::size_t count_infected_at(double at) const {
        refresh_sorted();
        return static_cast<std::size_t>(
            std::upper_bound(sorted_times_.begin(), sorted_times_.end(), at) -
            sorted_times_.begin());
    }

    const std::unordered_map<NodeId, double>& times() const { return times_; }

private:
    void refresh_sorted() const {
        if (!sorted_dirty_) return;
        sorted_times_.clear();
        sorted_times_.reserve(times_.size());
        for (const auto& [node, t] : times_) sorted_times_.push_back(t);
        std::sort(sorted_times_.begin(), sorted_times_.end());
        sorted_dirty_ = false;
    }

    std::unordered_map<NodeId, double> times_;
    mutable std::vector<double> sorted_times_;
    mutable bool sorted_dirty_ = false;
};

inline ClassLabel label_stream(const InfectionState& infections, NodeId node, double timestamp) {
    return infections.infected(node, timestamp) ? ClassLabel::Malicious : ClassLabel::Benign;
}

// Email open delays: log-normal fitted to a 47-minute median (e^mu = 2820 s)
// and a 2-minute mode (e^(mu - sigma^2) = 120 s).
struct LogNormalOpenTime {
    double mu = 7.9445;
    double sigma = 1.7768;

    double sample(Rng& rng) const {
        if (!(sigma > 0.0)) throw std::domain_error("LogNormalOpenTime: sigma must be > 0");
        return rng.lognormal(mu, sigma);
    }
};

struct PhishingScenario {
    std::uint32_t thread_count = 50;
    std::uint32_t recipients_per_thread = 100;
    std::uint32_t malicious_thread_count = 1;
    std::uint32_t universe_size = 1086;
    double click_rate = 1.0;
    LogNormalOpenTime open_time_model;

    void validate() const {
        if (malicious_thread_count > thread_count) {
            throw std::domain_error("PhishingScenario: malicious threads exceed thread count");
        }
        if (recipients_per_thread == 0 || thread_count == 0 || universe_size == 0) {
            throw std::domain_error("PhishingScenario: counts must be > 0");
        }
        if (universe_size > thread_count * recipients_per_thread) {
            throw std::domain_error("PhishingScenario: universe larger than total slots");
        }
        if (recipients_per_thread > universe_size) {
            throw std::domain_error("PhishingScenario: list larger than universe");
        }
        if (!(click_rate >= 0.0 && click_rate <= 1.0)) {
            throw std::domain_error("PhishingScenario: click_rate must be in [0, 1]");
        }
    }
};

struct PhishingTrace {
    std::vector<TraceEvent> events;            // Email events at t = 0
    InfectionState infections;
    std::vector<std::uint32_t> malicious_lists;
};

// All emails go out at t = 0. Recipient lists are drawn so the union covers
// the whole universe (every node lands in at least one list, remaining slots
// fill randomly with cross-list overlap). Recipients of a malicious list
// open it after a log-normal delay and get infected with click_rate
// probability; opens beyond the horizon fall outside the run by themselves.
inline PhishingTrace generate_phishing_trace(const PhishingScenario& scenario, double horizon,
                                             std::uint64_t seed) {
    scenario.validate();
    if (!(horizon > 0.0)) throw std::domain_error("generate_phishing_trace: horizon must be > 0");
    (void)horizon;

    Rng rng(mix_seed(seed, seed_stream::trace));
    std::vector<NodeId> universe(scenario.universe_size);
    for (std::uint32_t i = 0; i < scenario.universe_size; ++i) universe[i] = i;
    for (std::uint32_t i = scenario.universe_size - 1; i > 0; --i) {
        std::uint32_t j = static_cast<std::uint32_t>(rng.below(i + 1));
        std::swap(universe[i], universe[j]);
    }

    std::vector<std::vector<NodeId>> lists(scenario.thread_count);
    std::vector<std::unordered_set<NodeId>> list_sets(scenario.thread_count);
    for (std::uint32_t i = 0; i < scenario.universe_size; ++i) {
        std::uint32_t t = i % scenario.thread_count;
        if (lists[t].size() < scenario.recipients_per_thread) {
            lists[t].push_back(universe[i]);
            list_sets[t].insert(universe[i]);
        } else {
            // Universe exceeds capacity of its round-robin list; place the
            // node in the first list with room.
            for (std::uint32_t u = 0; u < scenario.thread_count; ++u) {
                if (lists[u].size() < scenario.recipients_per_thread &&
                    list_sets[u].insert(universe[i]).second) {
                    lists[u].push_back(universe[i]);
                    break;
                }
            }
        }
    }
    for (std::uint32_t t = 0; t < scenario.thread_count; ++t) {
        while (lists[t].size() < scenario.recipients_per_thread) {
            NodeId candidate = static_cast<NodeId>(rng.below(scenario.universe_size));
            if (list_sets[t].insert(candidate).second) lists[t].push_back(candidate);
        }
    }

    std::vector<std::uint32_t> thread_order(scenario.thread_count);
    for (std::uint32_t t = 0; t < scenario.thread_count; ++t) thread_order[t] = t;
    for (std::uint32_t i = scenario.thread_count - 1; i > 0; --i) {
        std::uint32_t j = static_cast<std::uint32_t>(rng.below(i + 1));
        std::swap(thread_order[i], thread_order[j]);
    }

    PhishingTrace trace;
    trace.malicious_lists.assign(thread_order.begin(),
                                 thread_order.begin() + scenario.malicious_thread_count);
    std::sort(trace.malicious_lists.begin(), trace.malicious_lists.end());

    for (std::uint32_t t = 0; t < scenario.thread_count; ++t) {
        trace.events.push_back(make_email(0.0, t, lists[t]));
    }

    Rng infection_rng(mix_seed(seed, seed_stream::infection));
    for (std::uint32_t t : trace.malicious_lists) {
        for (NodeId r : lists[t]) {
            double open_at = scenario.open_time_model.sample(infection_rng);
            bool clicks = infection_rng.bernoulli(scenario.click_rate);
            if (clicks) trace.infections.infect(r, open_at);
        }
    }
    return trace;
}

struct WaterholeScenario {
    std::uint32_t server_count = 50;
    std::uint32_t compromised_server = 0;
    double infection_probability = 1.0;
    double min_request_rate = 0.5;   // req/s, slowest watched server
    double max_request_rate = 43.7;  // req/s, the compromised server's rate
    std::uint32_t client_population = 50000;

    void validate() const {
        if (server_count == 0 || client_population == 0) {
            throw std::domain_error("WaterholeScenario: counts must be > 0");
        }
        if (compromised_server >= server_count) {
            throw std::domain_error("WaterholeScenario: compromised server outside watchlist");
        }
        if (!(infection_probability >= 0.0 && infection_probability <= 1.0)) {
            throw std::domain_error("WaterholeScenario: infection_probability in [0, 1]");
        }
        if (!(min_request_rate > 0.0) || !(max_request_rate >= min_request_rate)) {
            throw std::domain_error("WaterholeScenario: bad request rate range");
        }
    }
};

struct WaterholeTrace {
    std::vector<TraceEvent> events;  // Access events
    InfectionState infections;
    double compromise_time = 0.0;
    std::vector<double> server_rates;
};

// Per-server Poisson arrivals with log-uniform rates over
// [min_request_rate, max_request_rate]; the compromised server is pinned at
// the maximum rate. The compromise lands uniformly in the first half of the
// horizon; each post-compromise visit to that server infects the client with
// infection_probability. Infection draws use a separate seed stream, so the
// trace itself is identical across infection_probability settings.
inline WaterholeTrace generate_waterhole_trace(const WaterholeScenario& scenario,
                                               double horizon, std::uint64_t seed) {
    scenario.validate();
    if (!(horizon > 0.0)) throw std::domain_error("generate_waterhole_trace: horizon must be > 0");

    WaterholeTrace trace;
    Rng setup_rng(mix_seed(seed, seed_stream::trace));
    trace.server_rates.resize(scenario.server_count);
    const double log_lo = std::log(scenario.min_request_rate);
    const double log_hi = std::log(scenario.max_request_rate);
    for (std::uint32_t s = 0; s < scenario.server_count; ++s) {
        trace.server_rates[s] = std::exp(setup_rng.uniform(log_lo, log_hi));
    }
    trace.server_rates[scenario.compromised_server] = scenario.max_request_rate;
    trace.compromise_time = setup_rng.uniform(0.0, horizon * 0.5);

    for (std::uint32_t s = 0; s < scenario.server_count; ++s) {
        Rng rng(mix_seed(seed, seed_stream::trace, 1, s));
        double t = rng.exponential(trace.server_rates[s]);
        while (t < horizon) {
            NodeId client = static_cast<NodeId>(rng.below(scenario.client_population));
            trace.events.push_back(make_access(t, client, s));
            t += rng.exponential(trace.server_rates[s]);
        }
    }
    std::stable_sort(trace.events.begin(), trace.events.end(),
                     [](const TraceEvent& a, const TraceEvent& b) {
                         if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
                         return a.entity_id < b.entity_id;
                     });

    Rng infection_rng(mix_seed(seed, seed_stream::infection));
    for (const auto& ev : trace.events) {
        if (ev.entity_id != scenario.compromised_server) continue;
        if (ev.timestamp < trace.compromise_time) continue;
        if (infection_rng.bernoulli(scenario.infection_probability)) {
            trace.infections.infect(ev.client_id, ev.timestamp);
        }
    }
    return trace;
}

// Infection ground-truth sidecar: one `I,<timestamp>,<node_id>` line per
// infection, sorted by time.
inline void save_infections(const std::string& path, const InfectionState& infections) {
    std::vector<std::pair<double, NodeId>> rows;
    rows.reserve(infections.times().size());
    for (const auto& [node, t] : infections.times()) rows.emplace_back(t, node);
    std::sort(rows.begin(), rows.end());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_infections: cannot open " + path);
    char buf[64];
    for (const auto& [t, node] : rows) {
        std::snprintf(buf, sizeof(buf), "%.17g", t);
        out << "I," << buf << ',' << node << '\n';
    }
}

inline InfectionState load_infections(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_infections: cannot open " + path);
    InfectionState state;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string kind, ts, node;
        if (!std::getline(ss, kind, ',') || kind != "I" || !std::getline(ss, ts, ',') ||
            !std::getline(ss, node, ',')) {
            throw std::runtime_error("load_infections: " + path + ":" +
                                     std::to_string(lineno) + ": malformed record");
        }
        state.infect(static_cast<NodeId>(std::stoul(node)), std::stod(ts));
    }
    return state;
}

}  // namespace shapegd
