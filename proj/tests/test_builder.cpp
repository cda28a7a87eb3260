#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gridplan/builder.hpp"
#include "gridplan/fixtures.hpp"

#include <cmath>
#include <set>

using namespace gridplan;

namespace {

// Small single-area fixture that solves in seconds; used wherever a test
// needs an actual optimum.
Network mini_network() {
    FixtureSpec spec;
    spec.sub_areas = 1;
    spec.nodes_per_area = 3;
    spec.backbone_nodes = 2;
    spec.density = 0.4;
    spec.seed = 11;
    return gen_fixture(spec);
}

SolverConfig fast_cfg() {
    SolverConfig cfg;
    cfg.rel_gap = 1e-4;
    return cfg;
}

}  // namespace

TEST_CASE("big-M values per constraint family") {
    CHECK(big_m_flow(10.0) == doctest::Approx(14.1421356).epsilon(1e-6));
    CHECK(big_m_product(0.5, 4.0) == doctest::Approx(2.0));
    // Voltage family: box width plus twice the worst drop at capacity flow.
    double m = big_m_voltage(0.81, 1.21, 0.0008, 1.0, 10.0);
    CHECK(m == doctest::Approx(0.4 + 2 * 0.0008 * std::sqrt(2.0) * 10.0));
    CHECK(m > 0.0);
}

TEST_CASE("T1 centralized model counts") {
    Network net = preset_t1();
    BuildResult br = build_centralized(net);
    CHECK(br.atlas.scenarios.count() == 8);  // 7 branches + normal operation

    int s_vars = 0;
    for (int b = 0; b < br.atlas.n_branches; ++b)
        for (int sc = 0; sc < br.atlas.scenarios.count(); ++sc)
            if (br.atlas.sw_var(b, sc, 1) >= 0) ++s_vars;
    CHECK(s_vars == 56);

    // The faulted branch itself is frozen open in its own scenario.
    for (int sc = 1; sc < br.atlas.scenarios.count(); ++sc) {
        int xy = br.atlas.scenarios.fault_branches[sc - 1];
        CHECK(br.model.vars[br.atlas.sw_var(xy, sc, 1)].ub == doctest::Approx(0.0));
    }
}

TEST_CASE("degenerate single-node network builds") {
    Network net;
    net.catalog = preset_t1().catalog;
    net.horizon = preset_t1().horizon;
    net.horizon.saidi_limit = {{"backbone", 1.0}};
    Node n;
    n.id = "solo";
    n.load_p = {0.0};
    n.load_q = {0.0};
    n.customers = 0;
    n.substation.candidate = true;
    n.substation.existing = true;
    n.substation.invest_cost = 10;
    n.substation.maint_cost = 1;
    n.substation.max_transformers = 1;
    net.nodes = {n};
    net.partition.backbone = {"solo"};

    BuildResult br = build_centralized(net);
    CHECK(br.atlas.scenarios.count() == 1);
    MilpSolution sol = solve_milp(br.model);
    CHECK(sol.status == SolveStatus::Optimal);

    // Without any substation the same network cannot be built.
    Network bad = net;
    bad.nodes[0].substation = {};
    CHECK_THROWS_AS(build_centralized(bad), BuildError);

    Network no_limit = net;
    no_limit.horizon.saidi_limit.clear();
    CHECK_THROWS_AS(build_centralized(no_limit), BuildError);
}

TEST_CASE("binary count grows superlinearly when branches double") {
    FixtureSpec small;
    small.sub_areas = 1;
    small.nodes_per_area = 4;
    small.backbone_nodes = 2;
    small.seed = 5;
    Network a = gen_fixture(small);
    FixtureSpec big = small;
    big.nodes_per_area = 9;  // roughly doubles the branch count
    Network b = gen_fixture(big);

    BuildResult ba = build_centralized(a);
    BuildResult bb = build_centralized(b);
    double branch_ratio =
        static_cast<double>(b.branches.size()) / static_cast<double>(a.branches.size());
    double bin_ratio =
        static_cast<double>(bb.model.num_binaries()) / static_cast<double>(ba.model.num_binaries());
    CHECK(branch_ratio >= 1.8);
    CHECK(bin_ratio > branch_ratio);
}

TEST_CASE("backbone and sub-area views build with boundary machinery") {
    Network net = preset_t1();
    PartitionedNetwork part = partition_network(net);

    BuildResult bb = build_backbone_subproblem(part.backbone);
    CHECK(bb.atlas.scenarios.count() == 5);  // 4 view branches + NO
    REQUIRE(bb.atlas.pd.size() == 1);
    CHECK(bb.atlas.pd_var(0, 1) >= 0);
    CHECK(bb.model.vars[bb.atlas.pd_var(0, 1)].ub == doctest::Approx(2.0));

    BuildResult sa = build_subarea_subproblem(part.sub_areas[0]);
    CHECK(sa.atlas.scenarios.count() == 5);  // 3 internal + EOB + NO
    CHECK(sa.atlas.eob_branch == 3);
    CHECK(sa.atlas.lam_eob_v[0] >= 0);
    CHECK(sa.atlas.u_eob_v[0] >= 0);

    std::vector<VariableAtlas> satlases = {sa.atlas};
    Selectors sel = selection_matrices(part, bb.atlas, satlases);
    CHECK(sel.backbone.size() == 6);
    CHECK(sel.sub[0].size() == 6);
}

TEST_CASE("EOB with zero failure bounds drops the boundary outage term") {
    Network net = preset_t1();
    PartitionedNetwork part = partition_network(net);
    part.sub_areas[0].eob.bounds.cif_max = 0.0;
    part.sub_areas[0].eob.bounds.cid_max = 0.0;
    BuildResult sa = build_subarea_subproblem(part.sub_areas[0]);
    CHECK(sa.model.vars[sa.atlas.lam_eob_v[0]].ub == doctest::Approx(0.0));
    CHECK(sa.model.vars[sa.atlas.u_eob_v[0]].ub == doctest::Approx(0.0));
    // The u-product auxiliaries inherit the zero box.
    for (int n = 0; n < sa.atlas.n_nodes; ++n) {
        int v = sa.atlas.aux_u_var(n, 1);
        if (v >= 0) CHECK(sa.model.vars[v].ub == doctest::Approx(0.0));
    }
}

TEST_CASE("collapsed equivalent-load box still solves") {
    Network net = preset_t1();
    PartitionedNetwork part = partition_network(net);
    // Pin the equivalent load to the full area demand.
    part.backbone.elns[0].bounds.p_max = 2.0;
    BuildResult bb = build_backbone_subproblem(part.backbone);
    int pd = bb.atlas.pd_var(0, 1);
    bb.model.vars[pd].lb = 2.0;
    bb.model.vars[pd].ub = 2.0;
    MilpSolution sol = solve_milp(bb.model, fast_cfg());
    CHECK(sol.status == SolveStatus::Optimal);
    CHECK(sol.values(pd) == doctest::Approx(2.0));
}

TEST_CASE("mini centralized optimum satisfies the operational invariants") {
    Network net = mini_network();
    REQUIRE(validate_network(net).ok());
    BuildResult br = build_centralized(net);
    MilpSolution sol = solve_milp(br.model, fast_cfg());
    REQUIRE(sol.status == SolveStatus::Optimal);
    const VariableAtlas& A = br.atlas;
    const Vector& x = sol.values;
    const int T = A.stages;

    for (int t = 1; t <= T; ++t) {
        // Power balance at every node and scenario.
        for (int sc = 0; sc < A.scenarios.count(); ++sc) {
            for (int n = 0; n < A.n_nodes; ++n) {
                double inflow = 0.0;
                for (int b = 0; b < A.n_branches; ++b) {
                    int fi = net.node_index(net.branches[b].from);
                    int ti = net.node_index(net.branches[b].to);
                    if (ti == n) inflow += x(A.flow_p_var(b, sc, t));
                    if (fi == n) inflow -= x(A.flow_p_var(b, sc, t));
                }
                if (A.is_source[n]) inflow += x(A.inj_p_var(n, sc, t));
                double served = net.nodes[n].load_p[t - 1];
                if (sc > 0 && !A.is_source[n])
                    served *= 1.0 - std::round(x(A.q_var(n, sc - 1, t)));
                CHECK(std::abs(inflow - served) <= 1e-6);
            }
        }
        // Radiality counts, isolation, and q <= p per fault scenario.
        for (int sc = 1; sc < A.scenarios.count(); ++sc) {
            int closed = 0;
            int restored = 0;
            for (int b = 0; b < A.n_branches; ++b)
                closed += static_cast<int>(std::round(x(A.sw_var(b, sc, t))));
            for (int n = 0; n < A.n_nodes; ++n) {
                if (A.is_source[n]) continue;
                double q = std::round(x(A.q_var(n, sc - 1, t)));
                double p = std::round(x(A.p_var(n, sc - 1, t)));
                CHECK(q <= p + 1e-9);
                restored += static_cast<int>(1 - q);
            }
            CHECK(closed == restored);
            int xy = A.scenarios.fault_branches[sc - 1];
            CHECK(std::round(x(A.sw_var(xy, sc, t))) == 0);
        }
        // Flow within installed capacity on every branch and scenario.
        for (int sc = 0; sc < A.scenarios.count(); ++sc)
            for (int b = 0; b < A.n_branches; ++b) {
                double cap = A.capacity_at(net, b, t, x);
                double p = x(A.flow_p_var(b, sc, t));
                double q = x(A.flow_q_var(b, sc, t));
                CHECK(std::abs(p) <= cap + 1e-6);
                CHECK(std::abs(q) <= cap + 1e-6);
                CHECK(std::abs(p + q) <= std::sqrt(2.0) * cap + 1e-6);
                CHECK(std::abs(p - q) <= std::sqrt(2.0) * cap + 1e-6);
            }
    }

    Plan plan = extract_plan(A, net, sol);
    CHECK(plan.stages == T);
    // Closed normal-state branches match the labeled non-substation nodes.
    int labeled = 0;
    for (int n = 0; n < A.n_nodes; ++n) {
        if (A.is_source[n]) continue;
        for (int f = 0; f < A.n_feeders; ++f) {
            int v = A.h_node_var(n, f, 1);
            if (v >= 0 && sol.values(v) > 0.5) ++labeled;
        }
    }
    CHECK(static_cast<int>(plan.normal_closed[0].size()) == labeled);

    IndicesReport rep = internal_reliability_indices(A, net, sol);
    CHECK(rep.node_ids.size() > 0);
    for (const auto& [area, v] : rep.saidi)
        CHECK(v(0) <= net.horizon.saidi_limit.at(area) + 1e-6);
}

TEST_CASE("relaxing the SAIDI limit never increases cost") {
    Network net = mini_network();
    std::vector<double> scale = {1.0, 1.4, 3.0};
    double prev = std::numeric_limits<double>::infinity();
    for (double s : scale) {
        Network n2 = net;
        for (auto& [k, v] : n2.horizon.saidi_limit) v *= s;
        BuildResult br = build_centralized(n2);
        MilpSolution sol = solve_milp(br.model, fast_cfg());
        REQUIRE(sol.status == SolveStatus::Optimal);
        CHECK(sol.objective <= prev + 1e-4 * (1.0 + std::abs(prev)));
        prev = sol.objective;
    }
}

TEST_CASE("extract_plan rejects fractional binaries") {
    Network net = preset_t1();
    BuildResult br = build_centralized(net);
    MilpSolution fake;
    fake.status = SolveStatus::Optimal;
    fake.values = Vector::Zero(br.model.num_vars());
    fake.values(br.atlas.sw_var(0, 0, 1)) = 0.4;
    CHECK_THROWS_AS(extract_plan(br.atlas, net, fake), ExtractionError);
}

TEST_CASE("atlas dump is valid deterministic JSON") {
    Network net = preset_t1();
    BuildResult br = build_centralized(net);
    std::string a = br.atlas.dump_json();
    std::string b = br.atlas.dump_json();
    CHECK(a == b);
    CHECK(a.find("\"sw.t1.NO.b0\"") != std::string::npos);
    CHECK(a.find("\"eens.t1\"") != std::string::npos);
}
