#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "core.hpp"
#include "histogram.hpp"

namespace shapegd {

enum class TemplateType : std::uint8_t { Waterhole, Phishing };

// One trace record. Access: a client fetched from a server. Email: a mailing
// list delivered to its recipients. entity_id is the server for Access
// events and the list for Email events.
struct TraceEvent {
    enum class Kind : std::uint8_t { Access, Email };
    double timestamp = 0.0;
    Kind kind = Kind::Access;
    NodeId client_id = 0;
    std::uint32_t entity_id = 0;
    std::vector<NodeId> recipients;
};

inline TraceEvent make_access(double ts, NodeId client, std::uint32_t server) {
    TraceEvent e;
    e.timestamp = ts;
    e.kind = TraceEvent::Kind::Access;
    e.client_id = client;
    e.entity_id = server;
    return e;
}

inline TraceEvent make_email(double ts, std::uint32_t list, std::vector<NodeId> recipients) {
    if (recipients.empty()) throw std::invalid_argument("make_email: empty recipient list");
    TraceEvent e;
    e.timestamp = ts;
    e.kind = TraceEvent::Kind::Email;
    e.entity_id = list;
    e.recipients = std::move(recipients);
    return e;
}

// Disjoint split of the server/list id set into group_count groups.
struct PartitionSpec {
    std::uint32_t group_count = 1;
    std::unordered_map<std::uint32_t, std::uint32_t> assignment;

    std::uint32_t group_of(std::uint32_t entity) const {
        auto it = assignment.find(entity);
        if (it == assignment.end()) {
            throw std::out_of_range("PartitionSpec: unassigned entity id " +
                                    std::to_string(entity));
        }
        return it->second;
    }
};

// Sorts ids and cuts them into k contiguous groups of equal size (+-1).
inline PartitionSpec make_partition(std::vector<std::uint32_t> ids, std::uint32_t k) {
    if (k == 0) throw std::domain_error("make_partition: k must be >= 1");
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (ids.size() < k) {
        throw std::domain_error("make_partition: fewer ids than groups");
    }
    PartitionSpec spec;
    spec.group_count = k;
    const std::size_t n = ids.size();
    const std::size_t base = n / k, rem = n % k;
    std::size_t pos = 0;
    for (std::uint32_t g = 0; g < k; ++g) {
        std::size_t size = base + (g < rem ? 1 : 0);
        for (std::size_t i = 0; i < size; ++i) spec.assignment[ids[pos++]] = g;
    }
    return spec;
}

// The alert-FVs of one partition group over one time window. Alerts always
// feed the bin accumulator (when edges are configured) and the FV running
// sum; raw AlertFV retention is a flag since detection sweeps only need the
// accumulated state.
struct Neighborhood {
    std::string id;
    std::uint32_t partition_label = 0;
    std::unordered_set<NodeId> member_nodes;
    double window_start = 0.0;
    double expiration_time = 0.0;
    std::vector<AlertFV> alert_fvs;
    std::uint64_t total_fv_count = 0;
    BinAccumulator acc;
    std::vector<double> alert_fv_sum;
    bool retain_raw = true;

    std::uint64_t alert_count() const {
        return acc.edges != nullptr ? acc.alert_count
                                    : static_cast<std::uint64_t>(alert_fvs.size());
    }

    bool contains(NodeId node) const { return member_nodes.count(node) != 0; }

    void add_alert(const AlertFV& alert) {
        if (acc.edges != nullptr) acc.add(alert.fv);
        if (!alert_fv_sum.empty()) {
            for (std::size_t d = 0; d < alert.fv.dims(); ++d) alert_fv_sum[d] += alert.fv[d];
        }
        if (retain_raw) alert_fvs.push_back(alert);
    }
};

// Algorithm: one neighborhood per partition group with >= 1 satisfying node
// in the window. Waterhole membership = clients that accessed a server of
// the group; Phishing membership = recipients of a list of the group.
inline std::vector<Neighborhood> instantiate_neighborhoods(
    TemplateType template_type, const std::vector<TraceEvent>& events, double ntw,
    const PartitionSpec& partition, double window_start, const BinEdges* edges = nullptr,
    bool retain_raw = true, bool track_fv_sum = false) {
    std::vector<std::unordered_set<NodeId>> members(partition.group_count);
    for (const auto& ev : events) {
        if (ev.timestamp < window_start || ev.timestamp >= window_start + ntw) {
            throw std::invalid_argument("instantiate_neighborhoods: event outside window");
        }
        if (template_type == TemplateType::Waterhole) {
            if (ev.kind != TraceEvent::Kind::Access) continue;
            members[partition.group_of(ev.entity_id)].insert(ev.client_id);
        } else {
            if (ev.kind != TraceEvent::Kind::Email) continue;
            auto& set = members[partition.group_of(ev.entity_id)];
            for (NodeId r : ev.recipients) set.insert(r);
        }
    }
    std::vector<Neighborhood> nbds;
    for (std::uint32_t g = 0; g < partition.group_count; ++g) {
        if (members[g].empty()) continue;
        Neighborhood nb;
        nb.id = "g" + std::to_string(g);
        nb.partition_label = g;
        nb.member_nodes = std::move(members[g]);
        nb.window_start = window_start;
        nb.expiration_time = window_start + ntw;
        nb.retain_raw = retain_raw;
        if (edges != nullptr) nb.acc = BinAccumulator(*edges);
        if (track_fv_sum && edges != nullptr) nb.alert_fv_sum.assign(edges->dims(), 0.0);
        nbds.push_back(std::move(nb));
    }
    return nbds;
}

// Appends the alert to every neighborhood whose member set contains its node
// and whose window contains its timestamp. Returns how many neighborhoods
// accumulated it; 0 means the caller should count a drop.
inline std::size_t route_alert(std::vector<Neighborhood>& nbds, const AlertFV& alert) {
    std::size_t routed = 0;
    for (auto& nb : nbds) {
        if (alert.timestamp < nb.window_start || alert.timestamp >= nb.expiration_time) continue;
        if (!nb.contains(alert.node_id)) continue;
        nb.add_alert(alert);
        ++routed;
    }
    return routed;
}

// ---------------------------------------------------------------------------
// Batch engine: windows tile time back to back; neighborhoods are formed from
// each window's events and scored within the window as alerts accumulate,
// then emitted exactly once when the window expires.

struct BatchEngineConfig {
    TemplateType template_type = TemplateType::Phishing;
    double ntw = 3600.0;
    PartitionSpec partition;
    const BinEdges* edges = nullptr;
    double fv_rate = 1.0;
    bool retain_raw = true;
    bool track_fv_sum = false;
    // With buffering off, alerts route against the membership seen at arrival
    // and are not replayed when later events extend it. Memory stays bounded;
    // only use when each window's events are ingested before its alerts.
    bool buffer_alerts = true;
};

class BatchEngine {
public:
    explicit BatchEngine(BatchEngineConfig cfg, double window_start = 0.0)
        : cfg_(std::move(cfg)), window_start_(window_start) {}

    double window_start() const { return window_start_; }
    double window_end() const { return window_start_ + cfg_.ntw; }
    std::uint64_t dropped_alerts() const { return dropped_alerts_; }

    void ingest_event(const TraceEvent& ev) {
        if (ev.timestamp < window_start_ || ev.timestamp >= window_end()) {
            throw std::logic_error("BatchEngine: event outside current window; advance first");
        }
        events_.push_back(ev);
        membership_dirty_ = true;
    }

    // Drop accounting: out-of-window alerts count immediately. A routing miss
    // is definitive at ingest without buffering; with buffering it only
    // becomes one at advance_batch, since a later event can still add the
    // node.
    void ingest_alert(const AlertFV& alert) {
        if (alert.timestamp < window_start_ || alert.timestamp >= window_end()) {
            ++dropped_alerts_;
            return;
        }
        if (!cfg_.buffer_alerts) {
            if (membership_dirty_) rebuild();
            if (!route_into_current(alert)) ++dropped_alerts_;
            return;
        }
        alerts_.push_back(alert);
        if (!membership_dirty_) route_into_current(alert);
    }

    // Neighborhoods as of `now`, with membership from all events so far and
    // every buffered alert routed under that membership. total_fv_count uses
    // the elapsed window span, so mid-window eligibility is proportional.
    const std::vector<Neighborhood>& materialize(double now) {
        if (membership_dirty_) rebuild();
        double elapsed = std::min(now, window_end()) - window_start_;
        if (elapsed < 0.0) elapsed = 0.0;
        for (auto& nb : nbds_) {
            nb.total_fv_count = static_cast<std::uint64_t>(
                static_cast<double>(nb.member_nodes.size()) * elapsed * cfg_.fv_rate);
        }
        return nbds_;
    }

    // Emits the finished window's neighborhoods and opens the next window.
    std::vector<Neighborhood> advance_batch(double now) {
        if (now < window_end()) {
            throw std::logic_error("BatchEngine: advance_batch before window end");
        }
        materialize(window_end());
        if (cfg_.buffer_alerts) {
            for (const auto& alert : alerts_) {
                if (node_to_groups_.find(alert.node_id) == node_to_groups_.end()) {
                    ++dropped_alerts_;
                }
            }
        }
        std::vector<Neighborhood> expired = std::move(nbds_);
        nbds_.clear();
        events_.clear();
        alerts_.clear();
        membership_dirty_ = false;
        window_start_ = window_end();
        return expired;
    }

private:
    void rebuild() {
        nbds_ = instantiate_neighborhoods(cfg_.template_type, events_, cfg_.ntw,
                                          cfg_.partition, window_start_, cfg_.edges,
                                          cfg_.retain_raw, cfg_.track_fv_sum);
        node_to_groups_.clear();
        for (std::size_t i = 0; i < nbds_.size(); ++i) {
            for (NodeId n : nbds_[i].member_nodes) node_to_groups_[n].push_back(i);
        }
        membership_dirty_ = false;
        for (const auto& alert : alerts_) route_into_current(alert);
    }

    bool route_into_current(const AlertFV& alert) {
        auto it = node_to_groups_.find(alert.node_id);
        if (it == node_to_groups_.end()) return false;
        for (std::size_t idx : it->second) nbds_[idx].add_alert(alert);
        return true;
    }

    BatchEngineConfig cfg_;
    double window_start_;
    bool membership_dirty_ = false;
    std::vector<TraceEvent> events_;
    std::vector<AlertFV> alerts_;
    std::vector<Neighborhood> nbds_;
    std::unordered_map<NodeId, std::vector<std::size_t>> node_to_groups_;
    std::uint64_t dropped_alerts_ = 0;
};

// ---------------------------------------------------------------------------
// Online engine: a sliding window of length ntw advanced by `slide`; at each
// trigger t the active window is (t - ntw, t]. Membership expires exactly ntw
// after the access that created it.

struct OnlineEngineConfig {
    TemplateType template_type = TemplateType::Waterhole;
    double ntw = 6.0;
    double slide = 1.0;
    PartitionSpec partition;
    const BinEdges* edges = nullptr;
    double fv_rate = 1.0;
};

// Snapshot of one group at a scoring trigger.
struct ScoringState {
    std::uint32_t group = 0;
    std::uint64_t member_count = 0;
    std::uint64_t total_fv_count = 0;
    std::uint64_t alert_count = 0;
    VectorHistogram histogram;
};

class OnlineEngine {
public:
    explicit OnlineEngine(OnlineEngineConfig cfg) : cfg_(std::move(cfg)) {
        if (cfg_.edges == nullptr) {
            throw std::invalid_argument("OnlineEngine: bin edges required for scoring");
        }
        if (!(cfg_.slide > 0.0) || !(cfg_.ntw > 0.0)) {
            throw std::domain_error("OnlineEngine: ntw and slide must be > 0");
        }
    }

    std::uint64_t dropped_events() const { return dropped_events_; }
    std::uint64_t dropped_alerts() const { return dropped_alerts_; }

    // Accepts events up to one slide step out of order; older arrivals drop.
    void ingest_event(const TraceEvent& ev) {
        if (!events_.empty() && ev.timestamp < events_.back().timestamp) {
            if (ev.timestamp < events_.back().timestamp - cfg_.slide) {
                ++dropped_events_;
                return;
            }
            auto pos = std::upper_bound(
                events_.begin(), events_.end(), ev.timestamp,
                [](double t, const TraceEvent& e) { return t < e.timestamp; });
            events_.insert(pos, ev);
            return;
        }
        events_.push_back(ev);
    }

    void ingest_alert(const AlertFV& alert) {
        if (!alerts_.empty() && alert.timestamp < alerts_.back().timestamp - cfg_.slide) {
            ++dropped_alerts_;
            return;
        }
        BinnedAlert b;
        b.node = alert.node_id;
        b.timestamp = alert.timestamp;
        b.bins.resize(cfg_.edges->dims());
        for (std::size_t d = 0; d < cfg_.edges->dims(); ++d) {
            b.bins[d] = static_cast<std::uint16_t>(cfg_.edges->bin_index(d, alert.fv[d]));
        }
        if (!alerts_.empty() && b.timestamp < alerts_.back().timestamp) {
            auto pos = std::upper_bound(
                alerts_.begin(), alerts_.end(), b.timestamp,
                [](double t, const BinnedAlert& a) { return t < a.timestamp; });
            alerts_.insert(pos, std::move(b));
        } else {
            alerts_.push_back(std::move(b));
        }
    }

    // Scoring trigger at time `now`: evaluates the window (now - ntw, now]
    // and discards state that can no longer appear in any future window.
    std::vector<ScoringState> tick(double now) {
        const double lo = now - cfg_.ntw;
        while (!events_.empty() && events_.front().timestamp <= lo) events_.pop_front();
        while (!alerts_.empty() && alerts_.front().timestamp <= lo) alerts_.pop_front();

        std::vector<std::unordered_set<NodeId>> members(cfg_.partition.group_count);
        for (const auto& ev : events_) {
            if (ev.timestamp > now) break;
            if (cfg_.template_type == TemplateType::Waterhole) {
                if (ev.kind != TraceEvent::Kind::Access) continue;
                members[cfg_.partition.group_of(ev.entity_id)].insert(ev.client_id);
            } else {
                if (ev.kind != TraceEvent::Kind::Email) continue;
                auto& set = members[cfg_.partition.group_of(ev.entity_id)];
                for (NodeId r : ev.recipients) set.insert(r);
            }
        }

        std::vector<BinAccumulator> accs;
        accs.reserve(cfg_.partition.group_count);
        for (std::uint32_t g = 0; g < cfg_.partition.group_count; ++g) {
            accs.emplace_back(*cfg_.edges);
        }
        for (const auto& alert : alerts_) {
            if (alert.timestamp > now) break;
            for (std::uint32_t g = 0; g < cfg_.partition.group_count; ++g) {
                if (members[g].count(alert.node) != 0) accs[g].add_binned(alert.bins.data());
            }
        }

        std::vector<ScoringState> states;
        for (std::uint32_t g = 0; g < cfg_.partition.group_count; ++g) {
            if (members[g].empty()) continue;
            ScoringState s;
            s.group = g;
            s.member_count = members[g].size();
            s.total_fv_count = static_cast<std::uint64_t>(
                static_cast<double>(s.member_count) * cfg_.ntw * cfg_.fv_rate);
            s.alert_count = accs[g].alert_count;
            s.histogram = accs[g].to_histogram();
            states.push_back(std::move(s));
        }
        return states;
    }

    // Ingests one input and fires a scoring trigger whenever `now` crosses
    // the next slide boundary.
    std::optional<std::vector<ScoringState>> online_update(
        const std::variant<TraceEvent, AlertFV>& input, double now) {
        if (std::holds_alternative<TraceEvent>(input)) {
            ingest_event(std::get<TraceEvent>(input));
        } else {
            ingest_alert(std::get<AlertFV>(input));
        }
        if (now >= next_trigger_) {
            double t = next_trigger_;
            next_trigger_ += cfg_.slide;
            return tick(t);
        }
        return std::nullopt;
    }

private:
    struct BinnedAlert {
        NodeId node = 0;
        double timestamp = 0.0;
        std::vector<std::uint16_t> bins;
    };

    OnlineEngineConfig cfg_;
    std::deque<TraceEvent> events_;
    std::deque<BinnedAlert> alerts_;
    double next_trigger_ = 0.0;
    std::uint64_t dropped_events_ = 0;
    std::uint64_t dropped_alerts_ = 0;
};

// ---------------------------------------------------------------------------
// Trace files. Access record: A,<ts>,<client>,<server>
//              Email record:  E,<ts>,<list>,<r1>;<r2>;...
// Timestamps must be non-decreasing.

inline void save_trace(const std::string& path, const std::vector<TraceEvent>& events) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_trace: cannot open " + path);
    char buf[64];
    double last = -1.0;
    for (const auto& ev : events) {
        if (ev.timestamp < last) {
            throw std::invalid_argument("save_trace: timestamps must be non-decreasing");
        }
        last = ev.timestamp;
        std::snprintf(buf, sizeof(buf), "%.17g", ev.timestamp);
        if (ev.kind == TraceEvent::Kind::Access) {
            out << "A," << buf << ',' << ev.client_id << ',' << ev.entity_id << '\n';
        } else {
            out << "E," << buf << ',' << ev.entity_id << ',';
            for (std::size_t i = 0; i < ev.recipients.size(); ++i) {
                if (i != 0) out << ';';
                out << ev.recipients[i];
            }
            out << '\n';
        }
    }
}

inline std::vector<TraceEvent> load_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_trace: cannot open " + path);
    std::vector<TraceEvent> events;
    std::string line;
    std::size_t lineno = 0;
    double last = -1.0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fail = [&](const char* what) {
            throw std::runtime_error("load_trace: " + path + ":" + std::to_string(lineno) +
                                     ": " + what);
        };
        std::istringstream ss(line);
        std::string kind, field;
        if (!std::getline(ss, kind, ',')) fail("empty record");
        if (!std::getline(ss, field, ',')) fail("missing timestamp");
        TraceEvent ev;
        ev.timestamp = std::stod(field);
        if (ev.timestamp < last) fail("timestamps must be non-decreasing");
        last = ev.timestamp;
        if (kind == "A") {
            ev.kind = TraceEvent::Kind::Access;
            if (!std::getline(ss, field, ',')) fail("missing client id");
            ev.client_id = static_cast<NodeId>(std::stoul(field));
            if (!std::getline(ss, field, ',')) fail("missing server id");
            ev.entity_id = static_cast<std::uint32_t>(std::stoul(field));
        } else if (kind == "E") {
            ev.kind = TraceEvent::Kind::Email;
            if (!std::getline(ss, field, ',')) fail("missing list id");
            ev.entity_id = static_cast<std::uint32_t>(std::stoul(field));
            if (!std::getline(ss, field, ',')) fail("missing recipients");
            std::istringstream rs(field);
            std::string r;
            while (std::getline(rs, r, ';')) {
                ev.recipients.push_back(static_cast<NodeId>(std::stoul(r)));
            }
            if (ev.recipients.empty()) fail("empty recipient list");
        } else {
            fail("unknown record kind");
        }
        events.push_back(std::move(ev));
    }
    return events;
}

}  // namespace shapegd
