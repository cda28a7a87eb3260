#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gridplan/builder.hpp"
#include "gridplan/fixtures.hpp"
#include "gridplan/reliability.hpp"

#include <cmath>
#include <numeric>
#include <set>

using namespace gridplan;

namespace {

Catalog tiny_catalog() {
    Catalog cat;
    ConductorType c;
    c.id = "cx";
    c.capacity_mva = 10.0;
    c.resistance_per_km = 0.0004;
    c.reactance_per_km = 0.0004;
    c.failure_rate_per_km = 0.1;
    c.lifespan_stages = 1;
    c.remaining_lifespan_stages = 1;
    c.invest_cost = 10.0;
    c.maint_cost = 0.5;
    cat.conductors = {c};
    TransformerType t;
    t.id = "tx";
    t.capacity_mva = 10.0;
    t.lifespan_stages = 1;
    t.remaining_lifespan_stages = 1;
    t.invest_cost = 20.0;
    t.maint_cost = 1.0;
    cat.transformers = {t};
    return cat;
}

Node load_node(const std::string& id, double p, long customers) {
    Node n;
    n.id = id;
    n.load_p = {p};
    n.load_q = {p / 2};
    n.customers = customers;
    return n;
}

Node source_node(const std::string& id) {
    Node n;
    n.id = id;
    n.load_p = {0.0};
    n.load_q = {0.0};
    n.customers = 0;
    n.substation.candidate = true;
    n.substation.existing = true;
    n.substation.max_transformers = 2;
    return n;
}

Branch built_branch(const std::string& a, const std::string& b) {
    Branch br;
    br.from = a;
    br.to = b;
    br.length_km = 1.0;
    br.existing_conductor = "cx";
    br.switch_time_h = 0.5;
    br.repair_time_h = 4.0;
    return br;
}

PlanningHorizon horizon_one() {
    PlanningHorizon h;
    h.stages = 1;
    h.stage_years = {1, 2};
    h.interest_rate = 0.0;
    h.eens_weight = 1.0;
    h.saidi_limit = {{"backbone", 10.0}};
    return h;
}

Plan bare_plan(const Network& net, std::vector<int> closed) {
    Plan p;
    p.stages = 1;
    p.builds.resize(1);
    for (const TransformerSlot& slot : net.transformer_slots)
        p.builds[0].transformers[slot.id] = net.catalog.transformers[0].id;
    p.normal_closed = {std::move(closed)};
    p.feeder_of.resize(1);
    p.network_hash = network_hash(net);
    return p;
}

}  // namespace

TEST_CASE("single-branch feeder: the head node rides out the repair") {
    Network net;
    net.catalog = tiny_catalog();
    net.horizon = horizon_one();
    net.nodes = {source_node("S"), load_node("a", 1.0, 50)};
    net.branches = {built_branch("S", "a")};
    net.transformer_slots = {{"tr", "S", 0}};
    net.feeders = {{"f", 0}};
    net.partition.backbone = {"S", "a"};

    Plan plan = bare_plan(net, {0});
    FaultOutcome fo = simulate_fault(net, plan, 1, 0);
    CHECK(fo.affected[1] == 1);
    CHECK(fo.outage[1] == 1);

    ReliabilityReport rep = evaluate_plan_reliability(net, plan);
    CHECK(rep.cif_of("a", 1) == doctest::Approx(0.1));
    CHECK(rep.cid_of("a", 1) == doctest::Approx(0.1 * 4.0));
}

TEST_CASE("radial chain with and without a tie to a second source") {
    Network net;
    net.catalog = tiny_catalog();
    net.horizon = horizon_one();
    net.nodes = {source_node("S"), load_node("a", 1.0, 50), load_node("b", 1.0, 50),
                 source_node("S2")};
    net.branches = {built_branch("S", "a"), built_branch("a", "b"), built_branch("b", "S2")};
    net.transformer_slots = {{"tr", "S", 0}, {"tr2", "S2", 2}};
    net.feeders = {{"f", 0}, {"f2", 2}};
    net.partition.backbone = {"S", "a", "b", "S2"};

    // No tie: the whole chain stays dark for the repair.
    Network radial = net;
    radial.branches.pop_back();
    radial.transformer_slots.pop_back();
    radial.feeders.pop_back();
    radial.nodes.pop_back();
    radial.partition.backbone = {"S", "a", "b"};
    Plan plan_radial = bare_plan(radial, {0, 1});
    FaultOutcome fo = simulate_fault(radial, plan_radial, 1, 0);
    CHECK(fo.affected[1] == 1);
    CHECK(fo.affected[2] == 1);
    CHECK(fo.outage[1] == 1);
    CHECK(fo.outage[2] == 1);

    // With the tie built, restoration re-feeds both nodes from S2.
    Plan plan_tie = bare_plan(net, {0, 1});
    FaultOutcome fo2 = simulate_fault(net, plan_tie, 1, 0);
    CHECK(fo2.affected[1] == 1);
    CHECK(fo2.affected[2] == 1);
    CHECK(fo2.outage[1] == 0);
    CHECK(fo2.outage[2] == 0);

    // A fault on the open tie interrupts nobody.
    FaultOutcome fo3 = simulate_fault(net, plan_tie, 1, 2);
    CHECK(std::accumulate(fo3.affected.begin(), fo3.affected.end(), 0) == 0);

    // Faults on unbuilt branches are rejected.
    Network bare = net;
    bare.branches[2].existing_conductor.clear();
    Plan plan_bare = bare_plan(bare, {0, 1});
    CHECK_THROWS(simulate_fault(bare, plan_bare, 1, 2));
}

TEST_CASE("check_requirements margins") {
    ReliabilityReport rep;
    rep.saidi["s0"] = Vector::Constant(1, 1.4997);
    PlanningHorizon h;
    h.saidi_limit = {{"s0", 1.5}};
    RequirementsResult r = check_requirements(rep, h);
    CHECK(r.pass);
    CHECK(r.margin["s0"] == doctest::Approx(0.0003));

    rep.saidi["s0"] = Vector::Constant(1, 1.5);
    CHECK(check_requirements(rep, h).pass);

    rep.saidi["s0"] = Vector::Constant(1, 2.1);
    h.saidi_limit = {{"s0", 2.0}};
    CHECK_FALSE(check_requirements(rep, h).pass);
}

TEST_CASE("restoration matches exhaustive enumeration on small plans") {
    // Two feeders, a loop of ties; exhaustive search over closed subsets.
    Network net;
    net.catalog = tiny_catalog();
    net.horizon = horizon_one();
    net.nodes = {source_node("S"), load_node("a", 2.0, 10), load_node("b", 1.0, 10),
                 load_node("c", 1.5, 10)};
    net.branches = {built_branch("S", "a"), built_branch("a", "b"), built_branch("b", "c"),
                    built_branch("S", "c"), built_branch("a", "c")};
    net.transformer_slots = {{"tr1", "S", 0}, {"tr2", "S", 3}};
    net.feeders = {{"f1", 0}, {"f2", 3}};
    net.partition.backbone = {"S", "a", "b", "c"};

    Plan plan = bare_plan(net, {0, 1, 2});  // chain S-a-b-c; (S,c) and (a,c) are ties

    auto enumerate = [&](int fault) {
        const int B = static_cast<int>(net.branches.size());
        double best_load = -1.0;
        int best_switches = 0;
        std::set<std::vector<char>> best_patterns;
        for (int mask = 0; mask < (1 << B); ++mask) {
            if (mask & (1 << fault)) continue;
            std::vector<int> closed;
            for (int b = 0; b < B; ++b)
                if (mask & (1 << b)) closed.push_back(b);
            // Forest check via union-find.
            std::vector<int> parent(net.nodes.size());
            std::iota(parent.begin(), parent.end(), 0);
            std::function<int(int)> find = [&](int v) {
                while (parent[v] != v) v = parent[v] = parent[parent[v]];
                return v;
            };
            bool forest = true;
            for (int b : closed) {
                int u = find(net.node_index(net.branches[b].from));
                int v = find(net.node_index(net.branches[b].to));
                if (u == v) {
                    forest = false;
                    break;
                }
                parent[u] = v;
            }
            if (!forest) continue;
            // Count rule: closed branches equal served non-source nodes.
            std::vector<char> served(net.nodes.size(), 0);
            int n_served = 0;
            double load = 0.0;
            for (size_t n = 0; n < net.nodes.size(); ++n) {
                if (net.nodes[n].source_candidate()) continue;
                if (find(static_cast<int>(n)) == find(0)) {
                    served[n] = 1;
                    ++n_served;
                    load += net.nodes[n].load_p[0];
                }
            }
            if (static_cast<int>(closed.size()) != n_served) continue;
            // Any stranded closed branch breaks the forest-of-served rule.
            bool dangling = false;
            for (int b : closed) {
                int u = net.node_index(net.branches[b].from);
                int v = net.node_index(net.branches[b].to);
                bool u_ok = net.nodes[u].source_candidate() || served[u];
                bool v_ok = net.nodes[v].source_candidate() || served[v];
                if (!u_ok || !v_ok) dangling = true;
            }
            if (dangling) continue;
            // Capacities are slack by construction (10 MVA vs 4.5 MW total).
            if (load > best_load + 1e-9) {
                best_load = load;
                best_switches = static_cast<int>(closed.size());
                best_patterns.clear();
                best_patterns.insert(served);
            } else if (std::abs(load - best_load) <= 1e-9) {
                if (static_cast<int>(closed.size()) < best_switches) {
                    best_switches = static_cast<int>(closed.size());
                    best_patterns.clear();
                }
                if (static_cast<int>(closed.size()) == best_switches) best_patterns.insert(served);
            }
        }
        return std::make_tuple(best_load, best_switches, best_patterns);
    };

    for (int fault : {0, 1, 2}) {
        FaultOutcome fo = simulate_fault(net, plan, 1, fault);
        auto [best_load, best_switches, patterns] = enumerate(fault);
        double got_load = 0.0;
        std::vector<char> got(net.nodes.size(), 0);
        for (size_t n = 0; n < net.nodes.size(); ++n) {
            if (net.nodes[n].source_candidate()) continue;
            if (!fo.outage[n]) {
                got[n] = 1;
                got_load += net.nodes[n].load_p[0];
            }
        }
        CHECK(got_load == doctest::Approx(best_load));
        CHECK(patterns.count(got) == 1);
    }
}

TEST_CASE("adding a tie branch never worsens any node") {
    Network net;
    net.catalog = tiny_catalog();
    net.horizon = horizon_one();
    net.nodes = {source_node("S"), load_node("a", 1.0, 20), load_node("b", 0.8, 20),
                 load_node("c", 0.6, 20)};
    net.branches = {built_branch("S", "a"), built_branch("a", "b"), built_branch("b", "c"),
                    built_branch("S", "c")};
    net.transformer_slots = {{"tr1", "S", 0}, {"tr2", "S", 3}};
    net.feeders = {{"f1", 0}, {"f2", 3}};
    net.partition.backbone = {"S", "a", "b", "c"};

    Network without = net;
    without.branches[3].existing_conductor.clear();  // tie corridor left bare

    Plan base = bare_plan(without, {0, 1, 2});
    Plan with_tie = bare_plan(net, {0, 1, 2});

    ReliabilityReport r0 = evaluate_plan_reliability(without, base);
    ReliabilityReport r1 = evaluate_plan_reliability(net, with_tie);
    for (const std::string& id : {"a", "b", "c"})
        CHECK(r1.cid_of(id, 1) <= r0.cid_of(id, 1) + 1e-9);
}

TEST_CASE("oracle matches the planner's internal indices on a solved mini fixture") {
    FixtureSpec spec;
    spec.sub_areas = 1;
    spec.nodes_per_area = 3;
    spec.backbone_nodes = 2;
    spec.seed = 23;
    Network net = gen_fixture(spec);
    BuildResult br = build_centralized(net);
    SolverConfig cfg;
    cfg.rel_gap = 1e-4;
    MilpSolution sol = solve_milp(br.model, cfg);
    REQUIRE(sol.status == SolveStatus::Optimal);

    Plan plan = extract_plan(br.atlas, net, sol);
    IndicesReport internal = internal_reliability_indices(br.atlas, net, sol);
    ReliabilityReport oracle = evaluate_plan_reliability(net, plan);

    for (size_t k = 0; k < internal.node_ids.size(); ++k) {
        const std::string& id = internal.node_ids[k];
        int n = net.node_index(id);
        if (net.nodes[n].load_p[0] <= 0.0 && net.nodes[n].customers == 0) continue;
        CHECK(internal.cif(k, 0) == doctest::Approx(oracle.cif_of(id, 1)).epsilon(1e-6));
        CHECK(internal.cid(k, 0) == doctest::Approx(oracle.cid_of(id, 1)).epsilon(1e-6));
    }
    RequirementsResult req = check_requirements(oracle, net.horizon);
    CHECK(req.pass);

    // Round trip of the report formats.
    std::string json = oracle.to_json();
    CHECK(json.find("saidi") != std::string::npos);
    std::string csv = oracle.to_csv();
    CHECK(csv.find("node,stage,cif,cid") == 0);
}
