#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <string>
#include <unordered_set>
#include <vector>

#include "shapegd/neighborhood.hpp"
#include "shapegd/rng.hpp"

using namespace shapegd;

namespace {

AlertFV make_alert(NodeId node, double ts, double value = 0.5) {
    return AlertFV{FeatureVector(std::vector<double>{value}), node, ts, ClassLabel::Benign};
}

std::vector<std::uint32_t> id_range(std::uint32_t n) {
    std::vector<std::uint32_t> ids;
    for (std::uint32_t i = 0; i < n; ++i) ids.push_back(i);
    return ids;
}

std::string temp_path(const char* name) {
    return std::string("/tmp/shapegd_test_") + name;
}

}  // namespace

TEST_CASE("partition cuts sorted ids into near-equal contiguous groups") {
    PartitionSpec spec = make_partition({9, 0, 3, 1, 2, 4, 5, 6, 7, 8}, 3);
    CHECK(spec.group_count == 3);
    // 10 ids over 3 groups: sizes 4, 3, 3 in id order.
    for (std::uint32_t e : {0u, 1u, 2u, 3u}) CHECK(spec.group_of(e) == 0);
    for (std::uint32_t e : {4u, 5u, 6u}) CHECK(spec.group_of(e) == 1);
    for (std::uint32_t e : {7u, 8u, 9u}) CHECK(spec.group_of(e) == 2);
    CHECK_THROWS_AS(spec.group_of(10), std::out_of_range);

    // Duplicates collapse before the split.
    PartitionSpec dedup = make_partition({5, 5, 5, 6}, 2);
    CHECK(dedup.group_of(5) == 0);
    CHECK(dedup.group_of(6) == 1);

    CHECK_THROWS_AS(make_partition({1, 2, 3}, 0), std::domain_error);
    CHECK_THROWS_AS(make_partition({1, 2}, 3), std::domain_error);
}

TEST_CASE("waterhole neighborhoods collect the clients of each server group") {
    std::vector<TraceEvent> events{
        make_access(1.0, 10, 0), make_access(2.0, 11, 0), make_access(3.0, 12, 1),
        make_access(4.0, 10, 1),
    };
    PartitionSpec spec = make_partition({0, 1}, 2);
    auto nbds = instantiate_neighborhoods(TemplateType::Waterhole, events, 10.0, spec, 0.0);
    REQUIRE(nbds.size() == 2);
    CHECK(nbds[0].member_nodes == std::unordered_set<NodeId>{10, 11});
    CHECK(nbds[1].member_nodes == std::unordered_set<NodeId>{12, 10});
    CHECK(nbds[0].window_start == 0.0);
    CHECK(nbds[0].expiration_time == 10.0);

    CHECK_THROWS_AS(instantiate_neighborhoods(TemplateType::Waterhole,
                                              {make_access(10.0, 1, 0)}, 10.0, spec, 0.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(instantiate_neighborhoods(TemplateType::Waterhole,
                                              {make_access(-0.5, 1, 0)}, 10.0, spec, 0.0),
                    std::invalid_argument);

    // Email events are invisible to the waterhole template.
    auto none = instantiate_neighborhoods(TemplateType::Waterhole,
                                          {make_email(1.0, 0, {1, 2})}, 10.0, spec, 0.0);
    CHECK(none.empty());
}

TEST_CASE("phishing neighborhoods collect the recipients of each list group") {
    std::vector<TraceEvent> events{
        make_email(0.0, 0, {1, 2, 3}),
        make_email(0.0, 1, {3, 4}),
        make_email(0.5, 2, {9}),
    };
    PartitionSpec spec = make_partition({0, 1, 2, 3}, 4);
    auto nbds = instantiate_neighborhoods(TemplateType::Phishing, events, 3600.0, spec, 0.0);
    // List 3 never mailed anyone, so only three groups materialize.
    REQUIRE(nbds.size() == 3);
    CHECK(nbds[0].member_nodes == std::unordered_set<NodeId>{1, 2, 3});
    CHECK(nbds[1].member_nodes == std::unordered_set<NodeId>{3, 4});
    CHECK(nbds[2].member_nodes == std::unordered_set<NodeId>{9});
    CHECK(nbds[2].partition_label == 2);

    CHECK_THROWS_AS(make_email(1.0, 0, {}), std::invalid_argument);
}

TEST_CASE("alert routing respects membership and window bounds") {
    std::vector<TraceEvent> events{make_access(1.0, 10, 0), make_access(2.0, 11, 1)};
    PartitionSpec spec = make_partition({0, 1}, 2);
    auto nbds = instantiate_neighborhoods(TemplateType::Waterhole, events, 10.0, spec, 0.0);
    REQUIRE(nbds.size() == 2);

    CHECK(route_alert(nbds, make_alert(10, 5.0)) == 1);
    CHECK(route_alert(nbds, make_alert(99, 5.0)) == 0);   // not a member anywhere
    CHECK(route_alert(nbds, make_alert(10, 10.0)) == 0);  // window is [0, 10)
    CHECK(route_alert(nbds, make_alert(10, -1.0)) == 0);
    CHECK(nbds[0].alert_count() == 1);
    CHECK(nbds[1].alert_count() == 0);
    CHECK(nbds[0].alert_fvs.size() == 1);
    CHECK(nbds[0].alert_fvs[0].node_id == 10);
}

TEST_CASE("refining the partition preserves membership and routability") {
    Rng rng(601);
    std::vector<TraceEvent> events;
    for (int i = 0; i < 100; ++i) {
        events.push_back(make_access(rng.uniform(0.0, 10.0),
                                     static_cast<NodeId>(rng.below(50)),
                                     static_cast<std::uint32_t>(rng.below(20))));
    }
    auto coarse = instantiate_neighborhoods(TemplateType::Waterhole, events, 10.0,
                                            make_partition(id_range(20), 1), 0.0);
    auto fine = instantiate_neighborhoods(TemplateType::Waterhole, events, 10.0,
                                          make_partition(id_range(20), 5), 0.0);
    REQUIRE(coarse.size() == 1);

    std::unordered_set<NodeId> fine_union;
    for (const auto& nb : fine) {
        fine_union.insert(nb.member_nodes.begin(), nb.member_nodes.end());
    }
    CHECK(fine_union == coarse[0].member_nodes);

    for (int i = 0; i < 100; ++i) {
        AlertFV a = make_alert(static_cast<NodeId>(rng.below(60)), rng.uniform(0.0, 10.0));
        std::size_t in_coarse = route_alert(coarse, a);
        std::size_t in_fine = route_alert(fine, a);
        CHECK((in_coarse > 0) == (in_fine > 0));
    }
    std::uint64_t fine_total = 0;
    for (const auto& nb : fine) fine_total += nb.alert_count();
    // Every coarse alert lands in at least one fine group.
    CHECK(fine_total >= coarse[0].alert_count());
}

TEST_CASE("batch engine tiles windows and replays buffered alerts") {
    BinEdges edges = uniform_edges({0.0}, {1.0}, 4);
    BatchEngineConfig cfg;
    cfg.template_type = TemplateType::Waterhole;
    cfg.ntw = 10.0;
    cfg.partition = make_partition({0}, 1);
    cfg.edges = &edges;
    cfg.fv_rate = 2.0;
    BatchEngine engine(cfg);

    CHECK_THROWS_AS(engine.ingest_event(make_access(12.0, 1, 0)), std::logic_error);
    CHECK_THROWS_AS(engine.advance_batch(9.0), std::logic_error);

    // Alert arrives before the event that will make its node a member.
    engine.ingest_alert(make_alert(1, 0.5));
    engine.ingest_event(make_access(1.0, 1, 0));
    const auto& nbds = engine.materialize(5.0);
    REQUIRE(nbds.size() == 1);
    CHECK(nbds[0].alert_count() == 1);
    CHECK(nbds[0].total_fv_count == 10);  // 1 member * 5 s * 2 FV/s

    engine.ingest_alert(make_alert(77, 6.0));  // never a member
    engine.materialize(6.0);
    CHECK(engine.dropped_alerts() == 0);  // node 77 could still join the group
    engine.ingest_alert(make_alert(1, 15.0));  // beyond the window
    CHECK(engine.dropped_alerts() == 1);

    auto expired = engine.advance_batch(10.0);
    CHECK(engine.dropped_alerts() == 2);  // the node-77 alert never landed
    REQUIRE(expired.size() == 1);
    CHECK(expired[0].alert_count() == 1);
    CHECK(expired[0].total_fv_count == 20);
    CHECK(engine.window_start() == 10.0);
    CHECK(engine.materialize(12.0).empty());
}

TEST_CASE("unbuffered batch engine matches buffered when events come first") {
    BinEdges edges = uniform_edges({0.0}, {1.0}, 8);
    Rng rng(602);
    std::vector<TraceEvent> events;
    for (int i = 0; i < 40; ++i) {
        events.push_back(make_access(rng.uniform(0.0, 10.0),
                                     static_cast<NodeId>(rng.below(30)),
                                     static_cast<std::uint32_t>(rng.below(6))));
    }
    std::vector<AlertFV> alerts;
    for (int i = 0; i < 200; ++i) {
        alerts.push_back(make_alert(static_cast<NodeId>(rng.below(30)),
                                    rng.uniform(0.0, 10.0), rng.uniform()));
    }

    BatchEngineConfig cfg;
    cfg.template_type = TemplateType::Waterhole;
    cfg.ntw = 10.0;
    cfg.partition = make_partition(id_range(6), 3);
    cfg.edges = &edges;
    cfg.retain_raw = false;

    BatchEngineConfig direct_cfg = cfg;
    direct_cfg.buffer_alerts = false;

    BatchEngine buffered(cfg), direct(direct_cfg);
    for (const auto& ev : events) {
        buffered.ingest_event(ev);
        direct.ingest_event(ev);
    }
    for (const auto& a : alerts) {
        buffered.ingest_alert(a);
        direct.ingest_alert(a);
    }
    auto from_buffered = buffered.advance_batch(10.0);
    auto from_direct = direct.advance_batch(10.0);
    REQUIRE(from_buffered.size() == from_direct.size());
    for (std::size_t i = 0; i < from_buffered.size(); ++i) {
        CHECK(from_buffered[i].acc.counts == from_direct[i].acc.counts);
        CHECK(from_buffered[i].alert_count() == from_direct[i].alert_count());
    }
    CHECK(buffered.dropped_alerts() == direct.dropped_alerts());

    // Without buffering, an alert that precedes its membership event is lost.
    BatchEngine early(direct_cfg);
    early.ingest_alert(make_alert(5, 0.5));
    early.ingest_event(make_access(1.0, 5, 0));
    auto late = early.advance_batch(10.0);
    std::uint64_t total = 0;
    for (const auto& nb : late) total += nb.alert_count();
    CHECK(total == 0);
    CHECK(early.dropped_alerts() == 1);
}

TEST_CASE("online engine scores the trailing window at each tick") {
    BinEdges edges = uniform_edges({0.0}, {1.0}, 4);
    OnlineEngineConfig cfg;
    cfg.ntw = 6.0;
    cfg.slide = 1.0;
    cfg.partition = make_partition({0, 1}, 2);
    cfg.edges = &edges;
    cfg.fv_rate = 1.0;
    OnlineEngine engine(cfg);

    engine.ingest_event(make_access(4.0, 10, 0));
    engine.ingest_event(make_access(5.0, 11, 1));
    engine.ingest_alert(make_alert(10, 4.5));
    engine.ingest_alert(make_alert(10, 9.5));
    engine.ingest_alert(make_alert(11, 10.5));

    // Window (4, 10]: the access at exactly t=4 has aged out.
    auto states = engine.tick(10.0);
    REQUIRE(states.size() == 1);
    CHECK(states[0].group == 1);
    CHECK(states[0].member_count == 1);
    CHECK(states[0].total_fv_count == 6);
    CHECK(states[0].alert_count == 0);  // node 11's alert sits past t=10
    CHECK_FALSE(states[0].histogram.valid);

    // At t=10.5 node 11's alert is inside the window and its access is not
    // yet expired; at t=11 the access from t=5 would age out entirely.
    auto later = engine.tick(10.5);
    REQUIRE(later.size() == 1);
    CHECK(later[0].group == 1);
    CHECK(later[0].alert_count == 1);
    CHECK(later[0].histogram.valid);

    CHECK(engine.tick(11.0).empty());
}

TEST_CASE("online engine tolerates one slide of disorder and drops older input") {
    BinEdges edges = uniform_edges({0.0}, {1.0}, 4);
    OnlineEngineConfig cfg;
    cfg.ntw = 6.0;
    cfg.slide = 1.0;
    cfg.partition = make_partition({0}, 1);
    cfg.edges = &edges;
    OnlineEngine engine(cfg);

    engine.ingest_event(make_access(5.0, 1, 0));
    engine.ingest_event(make_access(4.5, 2, 0));  // within one slide: kept
    engine.ingest_event(make_access(3.0, 3, 0));  // too old: dropped
    CHECK(engine.dropped_events() == 1);

    engine.ingest_alert(make_alert(1, 5.0));
    engine.ingest_alert(make_alert(2, 4.5));
    engine.ingest_alert(make_alert(1, 3.9));
    CHECK(engine.dropped_alerts() == 1);

    auto states = engine.tick(6.0);
    REQUIRE(states.size() == 1);
    CHECK(states[0].member_count == 2);
    CHECK(states[0].alert_count == 2);

    CHECK_THROWS_AS(OnlineEngine(OnlineEngineConfig{}), std::invalid_argument);
    OnlineEngineConfig bad = cfg;
    bad.slide = 0.0;
    CHECK_THROWS_AS(OnlineEngine(bad), std::domain_error);
}

TEST_CASE("online_update fires a trigger per crossed slide boundary") {
    BinEdges edges = uniform_edges({0.0}, {1.0}, 4);
    OnlineEngineConfig cfg;
    cfg.ntw = 6.0;
    cfg.slide = 1.0;
    cfg.partition = make_partition({0}, 1);
    cfg.edges = &edges;
    OnlineEngine engine(cfg);

    auto first = engine.online_update(make_access(0.5, 1, 0), 0.5);
    REQUIRE(first.has_value());  // crosses the t=0 boundary
    CHECK(first->empty());       // nothing at or before t=0

    auto quiet = engine.online_update(AlertFV(make_alert(1, 0.7)), 0.9);
    CHECK_FALSE(quiet.has_value());

    auto fired = engine.online_update(make_access(1.1, 2, 0), 1.2);
    REQUIRE(fired.has_value());  // crosses t=1; window (-5, 1]
    REQUIRE(fired->size() == 1);
    CHECK((*fired)[0].member_count == 1);
    CHECK((*fired)[0].alert_count == 1);
}

TEST_CASE("trace files round-trip and enforce time order") {
    std::vector<TraceEvent> events{
        make_access(0.25, 3, 7),
        make_email(1.5, 2, {4, 5, 6}),
        make_access(1.5, 9, 1),
        make_email(3599.999, 0, {1086}),
    };
    const std::string path = temp_path("trace.csv");
    save_trace(path, events);
    auto loaded = load_trace(path);
    REQUIRE(loaded.size() == events.size());
    for (std::size_t i = 0; i < events.size(); ++i) {
        CHECK(loaded[i].timestamp == events[i].timestamp);
        CHECK(loaded[i].kind == events[i].kind);
        CHECK(loaded[i].client_id == events[i].client_id);
        CHECK(loaded[i].entity_id == events[i].entity_id);
        CHECK(loaded[i].recipients == events[i].recipients);
    }

    std::vector<TraceEvent> unsorted{make_access(2.0, 1, 0), make_access(1.0, 2, 0)};
    CHECK_THROWS_AS(save_trace(path, unsorted), std::invalid_argument);

    {
        std::ofstream out(path);
        out << "A,1.0,3,7\n";
        out << "X,2.0,1,1\n";
    }
    CHECK_THROWS_WITH(load_trace(path), Catch::Matchers::ContainsSubstring(":2:"));
    {
        std::ofstream out(path);
        out << "A,2.0,1,1\nA,1.0,1,1\n";
    }
    CHECK_THROWS_WITH(load_trace(path),
                      Catch::Matchers::ContainsSubstring("non-decreasing"));
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_trace(path), std::runtime_error);
}
