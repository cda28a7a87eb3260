#include "gridplan/fixtures.hpp"

#include "gridplan/types.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

namespace gridplan {

namespace {

struct Rng {
    std::mt19937_64 eng;
    explicit Rng(std::uint64_t seed) : eng(seed) {}
    double uniform() { return static_cast<double>(eng() >> 11) * 0x1.0p-53; }
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(uniform() * (hi - lo + 1)) % (hi - lo + 1);
    }
};

Catalog standard_catalog() {
    Catalog cat;
    ConductorType c1;
    c1.id = "c1";
    c1.capacity_mva = 5.0;
    c1.resistance_per_km = 0.0008;
    c1.reactance_per_km = 0.0008;
    c1.failure_rate_per_km = 0.1;
    c1.lifespan_stages = 1;
    c1.remaining_lifespan_stages = 1;
    c1.invest_cost = 10.0;
    c1.maint_cost = 0.5;
    ConductorType c2;
    c2.id = "c2";
    c2.capacity_mva = 10.0;
    c2.resistance_per_km = 0.0004;
    c2.reactance_per_km = 0.0004;
    c2.failure_rate_per_km = 0.05;
    c2.lifespan_stages = 1;
    c2.remaining_lifespan_stages = 1;
    c2.invest_cost = 20.0;
    c2.maint_cost = 1.0;
    cat.conductors = {c1, c2};
    TransformerType t10;
    t10.id = "t10";
    t10.capacity_mva = 10.0;
    t10.lifespan_stages = 1;
    t10.remaining_lifespan_stages = 1;
    t10.invest_cost = 40.0;
    t10.maint_cost = 2.0;
    cat.transformers = {t10};
    return cat;
}

Branch mk_branch(const std::string& from, const std::string& to, double len = 1.0,
                 double tsw = 0.5, double trp = 4.0) {
    Branch b;
    b.from = from;
    b.to = to;
    b.length_km = len;
    b.switch_time_h = tsw;
    b.repair_time_h = trp;
    return b;
}

Node mk_node(const std::string& id, double p, double q, long customers) {
    Node n;
    n.id = id;
    n.load_p = {p};
    n.load_q = {q};
    n.customers = customers;
    return n;
}

Node mk_substation(const std::string& id, double invest, double maint, int max_tr) {
    Node n;
    n.id = id;
    n.load_p = {0.0};
    n.load_q = {0.0};
    n.customers = 0;
    n.substation.candidate = true;
    n.substation.existing = true;
    n.substation.invest_cost = invest;
    n.substation.maint_cost = maint;
    n.substation.max_transformers = max_tr;
    return n;
}

PlanningHorizon one_stage_horizon() {
    PlanningHorizon h;
    h.stages = 1;
    h.stage_years = {1, 2};
    h.interest_rate = 0.1;
    h.eens_weight = 1.0;
    return h;
}

// SAIDI of the best-conductor plan on an intended radial topology with
// reachability-based restoration; used to pin achievable per-area limits.
// tree[i] lists branch indices forming the normal topology; ties stay open.
double calibrated_saidi(const Network& net, const std::vector<int>& area_nodes,
                        const std::vector<int>& closed, double lambda_per_km) {
    const int N = static_cast<int>(net.nodes.size());
    const int B = static_cast<int>(net.branches.size());

    std::vector<int> from(B), to(B);
    for (int b = 0; b < B; ++b) {
        from[b] = net.node_index(net.branches[b].from);
        to[b] = net.node_index(net.branches[b].to);
    }
    std::vector<char> is_closed(B, 0);
    for (int b : closed) is_closed[b] = 1;
    std::vector<char> is_source(N, 0);
    for (int n = 0; n < N; ++n) is_source[n] = net.nodes[n].source_candidate() ? 1 : 0;

    // Feeder labels over the closed set.
    std::vector<int> feeder(N, -1), feeder_br(B, -1);
    for (size_t f = 0; f < net.feeders.size(); ++f) {
        int head = net.feeders[f].head_branch;
        if (!is_closed[head]) continue;
        std::vector<int> stack;
        feeder_br[head] = static_cast<int>(f);
        for (int end : {from[head], to[head]})
            if (!is_source[end] && feeder[end] < 0) {
                feeder[end] = static_cast<int>(f);
                stack.push_back(end);
            }
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            for (int b = 0; b < B; ++b) {
                if (!is_closed[b] || b == head) continue;
                int v = -1;
                if (from[b] == u) v = to[b];
                if (to[b] == u) v = from[b];
                if (v < 0) continue;
                if (feeder_br[b] < 0) feeder_br[b] = feeder[u];
                if (!is_source[v] && feeder[v] < 0) {
                    feeder[v] = feeder[u];
                    stack.push_back(v);
                }
            }
        }
    }

    std::vector<double> cid(N, 0.0);
    for (int xy = 0; xy < B; ++xy) {
        if (feeder_br[xy] < 0) continue;  // open tie: no one affected
        double lam = lambda_per_km * net.branches[xy].length_km;
        // Restoration: reachability from sources over all built branches
        // except the faulted one.
        std::vector<char> reach(N, 0);
        std::vector<int> stack;
        for (int n = 0; n < N; ++n)
            if (is_source[n]) {
                reach[n] = 1;
                stack.push_back(n);
            }
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            for (int b = 0; b < B; ++b) {
                if (b == xy) continue;
                int v = -1;
                if (from[b] == u) v = to[b];
                if (to[b] == u) v = from[b];
                if (v >= 0 && !reach[v]) {
                    reach[v] = 1;
                    stack.push_back(v);
                }
            }
        }
        for (int n = 0; n < N; ++n) {
            if (is_source[n] || feeder[n] != feeder_br[xy]) continue;
            double tsw = net.branches[xy].switch_time_h;
            double trp = net.branches[xy].repair_time_h;
            cid[n] += lam * tsw;
            if (!reach[n]) cid[n] += lam * (trp - tsw);
        }
    }

    double total = 0.0, acc = 0.0;
    for (int n : area_nodes) {
        total += static_cast<double>(net.nodes[n].customers);
        acc += static_cast<double>(net.nodes[n].customers) * cid[n];
    }
    return total > 0 ? acc / total : 0.0;
}

}  // namespace

Network preset_t1() {
    Network net;
    net.catalog = standard_catalog();
    net.horizon = one_stage_horizon();

    Node s0 = mk_substation("0", 120.0, 5.0, 2);
    net.nodes = {s0,
                 mk_node("1", 0.0, 0.0, 0),
                 mk_node("2", 1.0, 0.5, 100),
                 mk_node("3", 0.0, 0.0, 0),
                 mk_node("4", 1.0, 0.5, 100),
                 mk_node("5", 1.0, 0.5, 100)};
    net.branches = {mk_branch("0", "1"), mk_branch("1", "2"), mk_branch("0", "2"),
                    mk_branch("1", "3"), mk_branch("3", "4"), mk_branch("4", "5"),
                    mk_branch("3", "5")};
    net.transformer_slots = {{"tr1", "0", 0}, {"tr2", "0", 2}};
    net.feeders = {{"f1", 0}, {"f2", 2}};
    net.horizon.saidi_limit = {{"s0", 0.3}};
    net.partition.backbone = {"0", "1", "2"};
    net.partition.sub_areas = {{{"3", "4", "5"}, 3}};
    return net;
}

Network preset_t2() {
    Network net;
    net.catalog = standard_catalog();
    net.horizon = one_stage_horizon();

    net.nodes = {mk_substation("b0", 150.0, 6.0, 3),
                 mk_node("b1", 0.0, 0.0, 0),
                 mk_node("b2", 0.0, 0.0, 0),
                 mk_node("b3", 0.0, 0.0, 0),
                 mk_node("b4", 0.0, 0.0, 0),
                 mk_node("b5", 0.8, 0.4, 80),
                 mk_node("a0", 0.5, 0.25, 60),
                 mk_node("a1", 0.4, 0.2, 40),
                 mk_node("a2", 0.6, 0.3, 80),
                 mk_node("a3", 0.3, 0.15, 30),
                 mk_node("a4", 0.5, 0.25, 50),
                 mk_node("a5", 0.4, 0.2, 40),
                 mk_node("c0", 0.4, 0.2, 50),
                 mk_node("c1", 0.6, 0.3, 70),
                 mk_node("c2", 0.3, 0.15, 30),
                 mk_node("c3", 0.5, 0.25, 60),
                 mk_node("c4", 0.4, 0.2, 40),
                 mk_node("c5", 0.6, 0.3, 80)};
    net.branches = {mk_branch("b0", "b1"),  // 0 trunk to area a
                    mk_branch("b1", "b2"),  // 1
                    mk_branch("b0", "b3"),  // 2 trunk to area c
                    mk_branch("b3", "b4"),  // 3
                    mk_branch("b0", "b5"),  // 4 local feeder
                    mk_branch("b2", "a0"),  // 5 boundary of area a
                    mk_branch("b4", "c0"),  // 6 boundary of area c
                    mk_branch("a0", "a1"),  // 7
                    mk_branch("a1", "a2"),  // 8
                    mk_branch("a2", "a3"),  // 9
                    mk_branch("a0", "a4"),  // 10
                    mk_branch("a4", "a5"),  // 11
                    mk_branch("c0", "c1"),  // 12
                    mk_branch("c1", "c2"),  // 13
                    mk_branch("c2", "c3"),  // 14
                    mk_branch("c0", "c4"),  // 15
                    mk_branch("c4", "c5")};  // 16
    net.transformer_slots = {{"tr1", "b0", 0}, {"tr2", "b0", 2}, {"tr3", "b0", 4}};
    net.feeders = {{"f1", 0}, {"f2", 2}, {"f3", 4}};
    net.horizon.saidi_limit = {{"s0", 1.12}, {"s1", 1.25}};
    net.partition.backbone = {"b0", "b1", "b2", "b3", "b4", "b5"};
    net.partition.sub_areas = {{{"a0", "a1", "a2", "a3", "a4", "a5"}, 5},
                               {{"c0", "c1", "c2", "c3", "c4", "c5"}, 6}};
    return net;
}

Network scaling_fixture(int sub_areas) {
    if (sub_areas < 1) throw Error("scaling fixture needs at least one sub-area");
    Network net;
    net.catalog = standard_catalog();
    net.horizon = one_stage_horizon();

    net.nodes = {mk_substation("b0", 150.0, 6.0, 2), mk_node("b1", 0.0, 0.0, 0),
                 mk_node("b2", 0.0, 0.0, 0)};
    net.branches = {mk_branch("b0", "b1"), mk_branch("b0", "b2")};
    net.transformer_slots = {{"tr1", "b0", 0}, {"tr2", "b0", 1}};
    net.feeders = {{"f1", 0}, {"f2", 1}};
    net.partition.backbone = {"b0", "b1", "b2"};

    for (int k = 0; k < sub_areas; ++k) {
        std::string prefix = "s" + std::to_string(k) + "n";
        std::vector<std::string> ids;
        for (int i = 0; i < 6; ++i) {
            ids.push_back(prefix + std::to_string(i));
            net.nodes.push_back(mk_node(ids.back(), 0.3 + 0.1 * (i % 3), 0.15, 40 + 10 * (i % 4)));
        }
        std::string attach = (k % 2 == 0) ? "b1" : "b2";
        int boundary = static_cast<int>(net.branches.size());
        net.branches.push_back(mk_branch(attach, ids[0]));
        net.branches.push_back(mk_branch(ids[0], ids[1]));
        net.branches.push_back(mk_branch(ids[1], ids[2]));
        net.branches.push_back(mk_branch(ids[2], ids[3]));
        net.branches.push_back(mk_branch(ids[0], ids[4]));
        net.branches.push_back(mk_branch(ids[4], ids[5]));
        net.branches.push_back(mk_branch(ids[3], ids[5]));
        net.partition.sub_areas.push_back({ids, boundary});
        net.horizon.saidi_limit["s" + std::to_string(k)] = 2.0;
    }
    return net;
}

Network gen_fixture(const FixtureSpec& spec) {
    if (spec.sub_areas < 1 || spec.nodes_per_area < 2 || spec.backbone_nodes < 2)
        throw Error("fixture spec needs >= 1 sub-area, >= 2 nodes per area, >= 2 backbone nodes");
    if (spec.density <= 0.0 || spec.density > 1.0)
        throw Error("fixture density must lie in (0, 1]");

    for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
        Rng rng(spec.seed * 7919 + attempt * 104729 + 17);
        Network net;
        net.catalog = standard_catalog();
        net.horizon = one_stage_horizon();

        net.nodes.push_back(mk_substation("b0", 140.0, 5.0, spec.backbone_nodes));
        for (int k = 1; k < spec.backbone_nodes; ++k)
            net.nodes.push_back(mk_node("b" + std::to_string(k), 0.0, 0.0, 0));
        for (int k = 1; k < spec.backbone_nodes; ++k) {
            int head = static_cast<int>(net.branches.size());
            net.branches.push_back(mk_branch("b0", "b" + std::to_string(k)));
            net.transformer_slots.push_back({"tr" + std::to_string(k), "b0", head});
            net.feeders.push_back({"f" + std::to_string(k), head});
        }
        net.partition.backbone.clear();
        for (int k = 0; k < spec.backbone_nodes; ++k)
            net.partition.backbone.push_back("b" + std::to_string(k));

        std::vector<int> closed;  // intended normal topology for calibration
        for (int b = 0; b < static_cast<int>(net.branches.size()); ++b) closed.push_back(b);

        for (int a = 0; a < spec.sub_areas; ++a) {
            std::string prefix = "s" + std::to_string(a) + "n";
            std::vector<std::string> ids;
            for (int i = 0; i < spec.nodes_per_area; ++i) {
                ids.push_back(prefix + std::to_string(i));
                double p = 0.1 * rng.uniform_int(2, 9);
                double q = 0.1 * rng.uniform_int(1, 4);
                long cust = 10L * rng.uniform_int(3, 12);
                net.nodes.push_back(mk_node(ids.back(), p, q, cust));
            }
            int attach = 1 + a % (spec.backbone_nodes - 1);
            int boundary = static_cast<int>(net.branches.size());
            net.branches.push_back(mk_branch("b" + std::to_string(attach), ids[0]));
            closed.push_back(boundary);
            // Random spanning tree over the area nodes.
            std::set<std::pair<int, int>> used;
            for (int i = 1; i < spec.nodes_per_area; ++i) {
                int par = rng.uniform_int(0, i - 1);
                used.insert({std::min(par, i), std::max(par, i)});
                closed.push_back(static_cast<int>(net.branches.size()));
                net.branches.push_back(mk_branch(ids[par], ids[i]));
            }
            // Open tie candidates by density.
            int ties = std::max(1, static_cast<int>(std::floor(spec.density * spec.nodes_per_area * 0.5)));
            int guard = 0;
            while (ties > 0 && guard++ < 50) {
                int u = rng.uniform_int(0, spec.nodes_per_area - 1);
                int v = rng.uniform_int(0, spec.nodes_per_area - 1);
                if (u == v) continue;
                auto key = std::make_pair(std::min(u, v), std::max(u, v));
                if (used.count(key)) continue;
                used.insert(key);
                net.branches.push_back(mk_branch(ids[u], ids[v]));
                --ties;
            }
            net.partition.sub_areas.push_back({ids, boundary});
        }

        // Per-area limits from the best-conductor plan on the intended
        // topology, with headroom.
        double lam_best = net.catalog.conductors[1].failure_rate_per_km;
        for (int a = 0; a < spec.sub_areas; ++a) {
            std::vector<int> nodes;
            for (const auto& id : net.partition.sub_areas[a].nodes)
                nodes.push_back(net.node_index(id));
            double s = calibrated_saidi(net, nodes, closed, lam_best);
            double lim = std::max(0.05, s * spec.saidi_headroom);
            net.horizon.saidi_limit["s" + std::to_string(a)] = std::round(lim * 1000.0) / 1000.0;
        }

        if (validate_network(net).ok()) return net;
    }
    throw Error("fixture generation failed to produce a valid network after 100 attempts");
}

void write_network_file(const Network& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write network file: " + path);
    out << network_to_json_text(net);
}

}  // namespace gridplan
