#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gridplan/network.hpp"

#include <set>
#include <string>

using namespace gridplan;

namespace {

// Hand-written copy of the T1 preset; the fixture generator must stay in sync
// (covered by the bench tests).
const char* kT1Json = R"JSON({
  "nodes": [
    {"id":"0","loadP":[0],"loadQ":[0],"customers":0,
     "substation":{"candidate":true,"existing":true,"investCost":120,"maintCost":5,"maxTransformers":2}},
    {"id":"1","loadP":[0],"loadQ":[0],"customers":0},
    {"id":"2","loadP":[1.0],"loadQ":[0.5],"customers":100},
    {"id":"3","loadP":[0],"loadQ":[0],"customers":0},
    {"id":"4","loadP":[1.0],"loadQ":[0.5],"customers":100},
    {"id":"5","loadP":[1.0],"loadQ":[0.5],"customers":100}
  ],
  "branches": [
    {"from":"0","to":"1","lengthKm":1,"switchTimeH":0.5,"repairTimeH":4},
    {"from":"1","to":"2","lengthKm":1,"switchTimeH":0.5,"repairTimeH":4},
    {"from":"0","to":"2","lengthKm":1,"switchTimeH":0.5,"repairTimeH":4},
    {"from":"1","to":"3","lengthKm":1,"switchTimeH":0.5,"repairTimeH":4},
    {"from":"3","to":"4","lengthKm":1,"switchTimeH":0.5,"repairTimeH":4},
    {"from":"4","to":"5","lengthKm":1,"switchTimeH":0.5,"repairTimeH":4},
    {"from":"3","to":"5","lengthKm":1,"switchTimeH":0.5,"repairTimeH":4}
  ],
  "transformerSlots": [
    {"id":"tr1","node":"0","outletBranch":0},
    {"id":"tr2","node":"0","outletBranch":2}
  ],
  "feeders": [
    {"id":"f1","headBranch":0},
    {"id":"f2","headBranch":2}
  ],
  "catalog": {
    "conductors": [
      {"id":"c1","capacityMVA":5,"rPerKm":0.0008,"xPerKm":0.0008,"lambdaPerKm":0.1,
       "lifespanStages":1,"remainingLifespanStages":1,"investCostPerKm":10,"maintCostPerKm":0.5},
      {"id":"c2","capacityMVA":10,"rPerKm":0.0004,"xPerKm":0.0004,"lambdaPerKm":0.05,
       "lifespanStages":1,"remainingLifespanStages":1,"investCostPerKm":20,"maintCostPerKm":1}
    ],
    "transformers": [
      {"id":"t10","capacityMVA":10,"lifespanStages":1,"remainingLifespanStages":1,
       "investCost":40,"maintCost":2}
    ]
  },
  "horizon": {"stages":1,"stageYears":[1,2],"interestRate":0.1,"eensWeight":1.0,
              "saidiLimit":{"s0":0.3}},
  "partition": {"backbone":["0","1","2"],
                "subAreas":[{"nodes":["3","4","5"],"boundaryBranch":3}]}
})JSON";

Catalog aging_catalog() {
    Catalog cat;
    ConductorType c;
    c.id = "ca";
    c.capacity_mva = 5;
    c.lifespan_stages = 3;
    c.remaining_lifespan_stages = 2;
    cat.conductors.push_back(c);
    return cat;
}

PlanningHorizon five_stages() {
    PlanningHorizon h;
    h.stages = 5;
    h.stage_years = {1, 2, 3, 4, 5, 6};
    h.interest_rate = 0.0;
    return h;
}

}  // namespace

TEST_CASE("load_network parses the T1 fixture") {
    Network net = network_from_json_text(kT1Json);
    CHECK(net.nodes.size() == 6);
    CHECK(net.branches.size() == 7);
    CHECK(net.transformer_slots.size() == 2);
    CHECK(net.feeders.size() == 2);
    CHECK(net.catalog.conductors.size() == 2);
    CHECK(net.horizon.stages == 1);
    CHECK(net.horizon.saidi_limit.at("s0") == doctest::Approx(0.3));
}

TEST_CASE("load_network reports the missing field") {
    std::string txt = kT1Json;
    auto pos = txt.find("\"catalog\"");
    txt.replace(pos, 9, "\"katalog\"");
    CHECK_THROWS_WITH_AS(network_from_json_text(txt), doctest::Contains("catalog"), ParseError);
}

TEST_CASE("load_network rejects dangling node ids") {
    std::string txt = kT1Json;
    auto pos = txt.find("\"from\":\"3\",\"to\":\"5\"");
    REQUIRE(pos != std::string::npos);
    txt.replace(pos, 19, "\"from\":\"3\",\"to\":\"99\"");
    CHECK_THROWS_AS(network_from_json_text(txt), ReferenceError);
}

TEST_CASE("validate_network accepts T1 and flags bad inputs") {
    Network net = network_from_json_text(kT1Json);
    CHECK(validate_network(net).ok());

    Network bad = net;
    bad.branches[0].switch_time_h = 5.0;
    bad.branches[0].repair_time_h = 4.0;
    ValidationReport rep = validate_network(bad);
    REQUIRE_FALSE(rep.ok());
    bool found = false;
    for (const auto& v : rep.violations)
        if (v.message.find("switch_time > repair_time") != std::string::npos) found = true;
    CHECK(found);

    Network bad2 = net;
    bad2.nodes[2].customers = -1;
    CHECK_FALSE(validate_network(bad2).ok());
}

TEST_CASE("partition_network builds ELN and EDS/EOB views") {
    Network net = network_from_json_text(kT1Json);
    PartitionedNetwork part = partition_network(net);

    CHECK(part.backbone.elns.size() == 1);
    CHECK(part.backbone.net.nodes.size() == 4);  // 3 backbone + 1 ELN
    CHECK(part.backbone.net.branches.size() == 4);
    REQUIRE(part.sub_areas.size() == 1);
    const SubAreaView& sa = part.sub_areas[0];
    CHECK(sa.net.nodes.size() == 4);  // 3 area nodes + EDS
    CHECK(sa.net.branches.size() == 4);  // 3 internal + EOB
    CHECK(sa.eob.eob_branch == 3);
    CHECK(part.coordination_size() == 6);  // CIF, CID/u, P, Q, S, U per stage

    // Shared boundary boxes.
    CHECK(part.backbone.elns[0].bounds.p_max == doctest::Approx(2.0));
    CHECK(sa.eob.bounds.p_max == doctest::Approx(2.0));
    CHECK(sa.eob.bounds.cif_max == doctest::Approx(sa.eob.bounds.cif_max));
    CHECK(part.backbone.elns[0].bounds.cif_max == doctest::Approx(sa.eob.bounds.cif_max));
}

TEST_CASE("partition round-trip reconstructs the original sets") {
    Network net = network_from_json_text(kT1Json);
    PartitionedNetwork part = partition_network(net);

    std::set<std::string> nodes;
    for (const auto& [view_id, orig_id] : part.backbone.orig_node) nodes.insert(orig_id);
    for (const auto& sa : part.sub_areas)
        for (const auto& [view_id, orig_id] : sa.orig_node) nodes.insert(orig_id);
    CHECK(nodes.size() == net.nodes.size());

    std::multiset<int> branches;
    for (int b : part.backbone.orig_branch) branches.insert(b);
    for (const auto& sa : part.sub_areas)
        for (int b : sa.orig_branch)
            if (b >= 0) branches.insert(b);
    CHECK(branches.size() == net.branches.size());
    for (size_t b = 0; b < net.branches.size(); ++b) CHECK(branches.count(static_cast<int>(b)) == 1);
}

TEST_CASE("partition rejects malformed area sets") {
    Network net = network_from_json_text(kT1Json);

    PartitionSpec two_areas;
    two_areas.backbone = {"0", "1", "2"};
    two_areas.sub_areas.push_back({{"3", "4"}, 3});
    two_areas.sub_areas.push_back({{"5"}, 3});
    CHECK_THROWS_AS(partition_network(net, two_areas), PartitionError);

    PartitionSpec incomplete;
    incomplete.backbone = {"0", "1", "2"};
    incomplete.sub_areas.push_back({{"3", "4"}, 3});
    CHECK_THROWS_AS(partition_network(net, incomplete), PartitionError);
}

TEST_CASE("partition with no sub-areas degenerates to the whole network") {
    Network net = network_from_json_text(kT1Json);
    PartitionSpec spec;
    spec.backbone = {"0", "1", "2", "3", "4", "5"};
    PartitionedNetwork part = partition_network(net, spec);
    CHECK(part.sub_areas.empty());
    CHECK(part.backbone.net.nodes.size() == net.nodes.size());
    CHECK(part.backbone.net.branches.size() == net.branches.size());
    CHECK(part.coordination_size() == 0);
}

TEST_CASE("aging vectors follow the install window") {
    Catalog cat = aging_catalog();
    PlanningHorizon h = five_stages();

    auto g1 = aging_vector(EquipmentKind::Conductor, cat, "ca", 1, h);
    CHECK(g1 == std::vector<int>{1, 1, 1, 0, 0});

    auto g0 = aging_vector(EquipmentKind::Conductor, cat, "ca", 0, h);
    CHECK(g0 == std::vector<int>{1, 1, 0, 0, 0});

    auto g4 = aging_vector(EquipmentKind::Conductor, cat, "ca", 4, h);
    CHECK(g4 == std::vector<int>{0, 0, 0, 1, 1});

    CHECK_THROWS_AS(aging_vector(EquipmentKind::Conductor, cat, "nope", 1, h), ReferenceError);
}

TEST_CASE("aging vectors are consecutive and bounded by lifespan") {
    Catalog cat = aging_catalog();
    PlanningHorizon h = five_stages();
    for (int tau = 0; tau <= 5; ++tau) {
        auto g = aging_vector(EquipmentKind::Conductor, cat, "ca", tau, h);
        int total = 0, runs = 0;
        bool in_run = false;
        for (int v : g) {
            total += v;
            if (v == 1 && !in_run) {
                ++runs;
                in_run = true;
            }
            if (v == 0) in_run = false;
        }
        CHECK(total <= 3);
        CHECK(runs <= 1);
    }
}

TEST_CASE("present value factors match the closed forms") {
    PlanningHorizon h;
    h.stages = 2;
    h.stage_years = {1, 2, 4};
    h.interest_rate = 0.0;
    PresentValueFactors pv = present_value_factors(h);
    CHECK(pv.invest(0) == doctest::Approx(1.0));
    CHECK(pv.operate(0) == doctest::Approx(1.0));  // one year in stage 1
    CHECK(pv.operate(1) == doctest::Approx(2.0));  // two years in stage 2

    PlanningHorizon h2;
    h2.stages = 1;
    h2.stage_years = {1, 2};
    h2.interest_rate = 0.1;
    PresentValueFactors pv2 = present_value_factors(h2);
    CHECK(pv2.invest(0) == doctest::Approx(0.909090909).epsilon(1e-6));
    CHECK(pv2.operate(0) == doctest::Approx(0.909090909).epsilon(1e-6));

    PlanningHorizon h3;
    h3.stages = 1;
    h3.stage_years = {1, 3};
    h3.interest_rate = 0.1;
    PresentValueFactors pv3 = present_value_factors(h3);
    CHECK(pv3.operate(0) == doctest::Approx(1.73554).epsilon(1e-5));
}

TEST_CASE("invest factors never increase over stages") {
    PlanningHorizon h;
    h.stages = 4;
    h.stage_years = {1, 3, 4, 7, 9};
    h.interest_rate = 0.07;
    PresentValueFactors pv = present_value_factors(h);
    for (int t = 1; t < h.stages; ++t) CHECK(pv.invest(t) <= pv.invest(t - 1) + 1e-12);
}

TEST_CASE("network hash is stable and content sensitive") {
    Network net = network_from_json_text(kT1Json);
    std::string h1 = network_hash(net);
    std::string h2 = network_hash(net);
    CHECK(h1 == h2);
    Network other = net;
    other.nodes[2].customers = 101;
    CHECK(network_hash(other) != h1);
}
