#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gridplan/milp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <random>
#include <sstream>
#include <vector>

using namespace gridplan;

namespace {

// Deterministic RNG helpers; raw engine output only, no std distributions.
struct Rng {
    std::mt19937_64 eng;
    explicit Rng(std::uint64_t seed) : eng(seed) {}
    double uniform() { return static_cast<double>(eng() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(uniform() * (hi - lo + 1)) % (hi - lo + 1);
    }
};

// ---------------------------------------------------------------------------
// Oracle 1: brute-force enumeration of basic feasible points of a bounded LP.
// Chooses k rows to hold at equality and n-k variables pinned to a bound,
// solves the square system, and keeps the best feasible candidate.
// ---------------------------------------------------------------------------
double lp_vertex_enumeration_optimum(const MilpModel& m, bool& found) {
    const int n = m.num_vars();
    const int nr = m.num_rows();
    double best = std::numeric_limits<double>::infinity();
    found = false;

    std::vector<int> rows(nr);
    for (int i = 0; i < nr; ++i) rows[i] = i;

    // Iterate over subsets of rows (bitmask) with popcount <= n.
    for (int mask = 0; mask < (1 << nr); ++mask) {
        int k = __builtin_popcount(static_cast<unsigned>(mask));
        if (k > n) continue;
        std::vector<int> active;
        for (int i = 0; i < nr; ++i)
            if (mask & (1 << i)) active.push_back(i);

        // Choose which n-k variables sit at bounds: enumerate subsets of vars
        // of size n-k, and each lower/upper combination.
        std::vector<int> vars(n);
        for (int j = 0; j < n; ++j) vars[j] = j;
        std::vector<int> pick(n - k + 1);

        std::vector<int> comb;
        std::function<void(int, int)> rec = [&](int start, int need) {
            if (need == 0) {
                // comb holds the pinned variables; the rest solve the system.
                std::vector<int> free_vars;
                for (int j = 0; j < n; ++j)
                    if (std::find(comb.begin(), comb.end(), j) == comb.end()) free_vars.push_back(j);
                const int nf = static_cast<int>(free_vars.size());
                for (int bits = 0; bits < (1 << comb.size()); ++bits) {
                    Eigen::VectorXd x(n);
                    for (size_t t = 0; t < comb.size(); ++t) {
                        const auto& v = m.vars[comb[t]];
                        x(comb[t]) = (bits & (1 << t)) ? v.ub : v.lb;
                    }
                    if (nf > 0) {
                        Eigen::MatrixXd B(nf, nf);
                        Eigen::VectorXd rhs(nf);
                        for (int r = 0; r < nf; ++r) {
                            const MilpRow& row = m.rows[active[r]];
                            rhs(r) = row.rhs;
                            Eigen::VectorXd full = Eigen::VectorXd::Zero(n);
                            for (size_t t = 0; t < row.idx.size(); ++t) full(row.idx[t]) += row.coef[t];
                            for (size_t t = 0; t < comb.size(); ++t) rhs(r) -= full(comb[t]) * x(comb[t]);
                            for (int cidx = 0; cidx < nf; ++cidx) B(r, cidx) = full(free_vars[cidx]);
                        }
                        Eigen::FullPivLU<Eigen::MatrixXd> lu(B);
                        if (lu.rank() < nf) continue;
                        Eigen::VectorXd sol = lu.solve(rhs);
                        for (int cidx = 0; cidx < nf; ++cidx) x(free_vars[cidx]) = sol(cidx);
                    }
                    PointEvaluation ev = evaluate_point(m, x, 1e-6, 1.0);
                    if (ev.max_constraint_violation <= 1e-6 && ev.max_bound_violation <= 1e-6) {
                        found = true;
                        best = std::min(best, ev.objective);
                    }
                }
                return;
            }
            for (int j = start; j < n; ++j) {
                comb.push_back(j);
                rec(j + 1, need - 1);
                comb.pop_back();
            }
        };
        if (k == static_cast<int>(active.size())) rec(0, n - k);
    }
    return best;
}

// ---------------------------------------------------------------------------
// Oracle 2: exhaustive enumeration over binary assignments; continuous
// remainder handled by solve_lp with the binaries pinned via bounds.
// ---------------------------------------------------------------------------
double milp_enumeration_optimum(const MilpModel& m, bool& found) {
    std::vector<int> bins;
    for (int j = 0; j < m.num_vars(); ++j)
        if (m.vars[j].type == VarType::Binary) bins.push_back(j);
    const int k = static_cast<int>(bins.size());
    REQUIRE(k <= 14);
    double best = std::numeric_limits<double>::infinity();
    found = false;
    for (long mask = 0; mask < (1L << k); ++mask) {
        MilpModel fixed = m;
        for (int t = 0; t < k; ++t) {
            double v = (mask & (1L << t)) ? 1.0 : 0.0;
            if (v < fixed.vars[bins[t]].lb - 1e-9 || v > fixed.vars[bins[t]].ub + 1e-9) {
                v = -1;  // assignment conflicts with declared bounds
            }
            if (v < 0) {
                fixed.vars[bins[t]].lb = 1.0;
                fixed.vars[bins[t]].ub = 0.0;  // empty interval, prune below
            } else {
                fixed.vars[bins[t]].lb = v;
                fixed.vars[bins[t]].ub = v;
            }
        }
        bool ok = true;
        for (int t = 0; t < k; ++t)
            if (fixed.vars[bins[t]].lb > fixed.vars[bins[t]].ub) ok = false;
        if (!ok) continue;
        MilpSolution s = solve_lp(fixed);
        if (s.status != SolveStatus::Optimal) continue;
        found = true;
        best = std::min(best, s.objective);
    }
    return best;
}

MilpModel random_lp(std::uint64_t seed) {
    Rng rng(seed);
    MilpModel m;
    m.module_tag = "rndlp";
    const int n = rng.uniform_int(3, 8);
    for (int j = 0; j < n; ++j)
        m.add_var("x" + std::to_string(j), 0.0, rng.uniform(1.0, 10.0), VarType::Continuous);
    const int nr = rng.uniform_int(2, 7);
    for (int r = 0; r < nr; ++r) {
        MilpRow row;
        row.name = "c" + std::to_string(r);
        double mid_act = 0.0;
        for (int j = 0; j < n; ++j) {
            int c = rng.uniform_int(-3, 3);
            if (c == 0) continue;
            row.idx.push_back(j);
            row.coef.push_back(c);
            mid_act += c * 0.5 * m.vars[j].ub;
        }
        if (row.idx.empty()) {
            row.idx.push_back(0);
            row.coef.push_back(1.0);
            mid_act = 0.5 * m.vars[0].ub;
        }
        int sense = rng.uniform_int(0, 2);
        if (sense == 0) {
            row.sense = RowSense::LE;
            row.rhs = mid_act + rng.uniform(0.1, 4.0);
        } else if (sense == 1) {
            row.sense = RowSense::GE;
            row.rhs = mid_act - rng.uniform(0.1, 4.0);
        } else {
            row.sense = RowSense::EQ;
            row.rhs = mid_act;
        }
        m.add_row(row);
    }
    for (int j = 0; j < n; ++j) m.set_objective(j, rng.uniform(-5.0, 5.0));
    return m;
}

MilpModel random_milp(std::uint64_t seed) {
    Rng rng(seed);
    MilpModel m;
    m.module_tag = "rndmip";
    const int k = rng.uniform_int(4, 12);
    const int nc = rng.uniform_int(0, 3);
    std::vector<double> anchor;
    for (int j = 0; j < k; ++j) {
        m.add_binary("b" + std::to_string(j));
        anchor.push_back(rng.uniform_int(0, 1));
    }
    for (int j = 0; j < nc; ++j) {
        m.add_var("y" + std::to_string(j), 0.0, 5.0, VarType::Continuous);
        anchor.push_back(2.5);
    }
    const int n = k + nc;
    const int nr = rng.uniform_int(2, 6);
    for (int r = 0; r < nr; ++r) {
        MilpRow row;
        row.name = "c" + std::to_string(r);
        double act = 0.0;
        for (int j = 0; j < n; ++j) {
            int c = rng.uniform_int(-2, 2);
            if (c == 0) continue;
            row.idx.push_back(j);
            row.coef.push_back(c);
            act += c * anchor[j];
        }
        if (row.idx.empty()) continue;
        int sense = rng.uniform_int(0, 1);
        if (sense == 0) {
            row.sense = RowSense::LE;
            row.rhs = act + rng.uniform(0.0, 2.0);
        } else {
            row.sense = RowSense::GE;
            row.rhs = act - rng.uniform(0.0, 2.0);
        }
        m.add_row(row);
    }
    for (int j = 0; j < n; ++j) m.set_objective(j, rng.uniform(-4.0, 4.0));
    return m;
}

}  // namespace

TEST_CASE("lp: one-variable maximization") {
    MilpModel m;
    m.module_tag = "t";
    m.add_var("x", 0.0, std::numeric_limits<double>::infinity(), VarType::Continuous);
    MilpRow r;
    r.name = "cap";
    r.idx = {0};
    r.coef = {1.0};
    r.sense = RowSense::LE;
    r.rhs = 3.0;
    m.add_row(r);
    m.set_objective(0, -1.0);
    MilpSolution s = solve_lp(m);
    REQUIRE(s.status == SolveStatus::Optimal);
    CHECK(s.values(0) == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(s.objective == doctest::Approx(-3.0).epsilon(1e-9));
}

TEST_CASE("lp: symmetric covering") {
    MilpModel m;
    m.module_tag = "t";
    m.add_var("x", 0.0, 100.0, VarType::Continuous);
    m.add_var("y", 0.0, 100.0, VarType::Continuous);
    MilpRow r;
    r.name = "cover";
    r.idx = {0, 1};
    r.coef = {1.0, 1.0};
    r.sense = RowSense::GE;
    r.rhs = 2.0;
    m.add_row(r);
    m.set_objective(0, 1.0);
    m.set_objective(1, 1.0);
    MilpSolution s = solve_lp(m);
    REQUIRE(s.status == SolveStatus::Optimal);
    CHECK(s.objective == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("lp: infeasible and unbounded statuses") {
    MilpModel m;
    m.module_tag = "t";
    m.add_var("x", 0.0, 1.0, VarType::Continuous);
    MilpRow r;
    r.name = "impossible";
    r.idx = {0};
    r.coef = {1.0};
    r.sense = RowSense::GE;
    r.rhs = 5.0;
    m.add_row(r);
    MilpSolution s = solve_lp(m);
    CHECK(s.status == SolveStatus::Infeasible);
    CHECK(s.infeasibility_hint == "impossible");

    MilpModel u;
    u.module_tag = "t";
    u.add_var("x", 0.0, std::numeric_limits<double>::infinity(), VarType::Continuous);
    u.add_var("y", 0.0, std::numeric_limits<double>::infinity(), VarType::Continuous);
    MilpRow r2;
    r2.name = "link";
    r2.idx = {0, 1};
    r2.coef = {1.0, -1.0};
    r2.sense = RowSense::LE;
    r2.rhs = 1.0;
    u.add_row(r2);
    u.set_objective(0, -1.0);  // x can grow with y
    MilpSolution su = solve_lp(u);
    CHECK(su.status == SolveStatus::Unbounded);
}

TEST_CASE("lp: random instances match basic-solution enumeration") {
    int checked = 0;
    for (std::uint64_t seed = 1; seed <= 14; ++seed) {
        MilpModel m = random_lp(seed * 1000 + 7);
        bool found = false;
        double oracle = lp_vertex_enumeration_optimum(m, found);
        MilpSolution s = solve_lp(m);
        if (!found) {
            CHECK(s.status == SolveStatus::Infeasible);
            continue;
        }
        REQUIRE(s.status == SolveStatus::Optimal);
        CHECK(s.objective == doctest::Approx(oracle).epsilon(1e-7));
        ++checked;
    }
    CHECK(checked >= 10);
}

TEST_CASE("milp: two-binary knapsack") {
    MilpModel m;
    m.module_tag = "t";
    m.add_binary("x1");
    m.add_binary("x2");
    MilpRow r;
    r.name = "knap";
    r.idx = {0, 1};
    r.coef = {1.0, 1.0};
    r.sense = RowSense::LE;
    r.rhs = 1.0;
    m.add_row(r);
    m.set_objective(0, -3.0);
    m.set_objective(1, -2.0);
    MilpSolution s = solve_milp(m);
    REQUIRE(s.status == SolveStatus::Optimal);
    CHECK(s.objective == doctest::Approx(-3.0));
    CHECK(s.values(0) == doctest::Approx(1.0));
    CHECK(s.values(1) == doctest::Approx(0.0));
}

TEST_CASE("milp: all-continuous model equals solve_lp") {
    MilpModel m = random_lp(42);
    MilpSolution lp = solve_lp(m);
    MilpSolution mip = solve_milp(m);
    REQUIRE(lp.status == mip.status);
    if (lp.status == SolveStatus::Optimal)
        CHECK(mip.objective == doctest::Approx(lp.objective).epsilon(1e-9));
}

TEST_CASE("milp: 20 random models match exhaustive enumeration") {
    int solved = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        MilpModel m = random_milp(seed * 7919 + 13);
        bool found = false;
        double oracle = milp_enumeration_optimum(m, found);
        MilpSolution s = solve_milp(m);
        if (!found) {
            CHECK(s.status == SolveStatus::Infeasible);
            continue;
        }
        REQUIRE(s.status == SolveStatus::Optimal);
        CHECK(s.objective == doctest::Approx(oracle).epsilon(1e-6));
        // Weak duality: the LP relaxation never exceeds the integer optimum.
        MilpSolution lp = solve_lp(m);
        REQUIRE(lp.status == SolveStatus::Optimal);
        CHECK(lp.objective <= s.objective + 1e-6 * std::max(1.0, std::abs(s.objective)));
        ++solved;
    }
    CHECK(solved >= 15);
}

TEST_CASE("milp: determinism is bit-for-bit") {
    MilpModel m = random_milp(991);
    MilpSolution a = solve_milp(m);
    MilpSolution b = solve_milp(m);
    REQUIRE(a.status == b.status);
    REQUIRE(a.values.size() == b.values.size());
    CHECK(std::memcmp(a.values.data(), b.values.data(), sizeof(double) * a.values.size()) == 0);
    CHECK(std::memcmp(&a.objective, &b.objective, sizeof(double)) == 0);
    CHECK(a.node_count == b.node_count);
}

TEST_CASE("milp: node limit returns incumbent and bound") {
    MilpModel m = random_milp(17);
    SolverConfig cfg;
    cfg.node_limit = 2;
    MilpSolution s = solve_milp(m, cfg);
    if (s.status == SolveStatus::NodeLimit) {
        CHECK(std::isfinite(s.best_bound));
    } else {
        CHECK((s.status == SolveStatus::Optimal || s.status == SolveStatus::Infeasible));
    }
}

TEST_CASE("evaluate_point reports violations and integrality") {
    MilpModel m;
    m.module_tag = "t";
    m.add_var("x", 0.0, std::numeric_limits<double>::infinity(), VarType::Continuous);
    MilpRow r;
    r.name = "cap";
    r.idx = {0};
    r.coef = {1.0};
    r.sense = RowSense::LE;
    r.rhs = 3.0;
    m.add_row(r);
    m.set_objective(0, -1.0);

    MilpSolution s = solve_lp(m);
    REQUIRE(s.status == SolveStatus::Optimal);
    PointEvaluation ev = evaluate_point(m, s.values);
    CHECK(ev.feasible);
    CHECK(ev.worst_violation <= 1e-7);

    Vector bad(1);
    bad << 4.0;
    PointEvaluation ev2 = evaluate_point(m, bad);
    CHECK_FALSE(ev2.feasible);
    CHECK(ev2.worst_violation == doctest::Approx(1.0));

    MilpModel bm;
    bm.module_tag = "t";
    bm.add_binary("b1");
    bm.add_binary("b2");
    Vector v1(2), v2(2);
    v1 << 1.0, 0.0;
    v2 << 0.0, 1.0;
    Vector mix = 0.5 * v1 + 0.5 * v2;
    PointEvaluation evm = evaluate_point(bm, mix);
    CHECK(evm.max_integrality_violation == doctest::Approx(0.5));
    CHECK_FALSE(evm.feasible);
}

TEST_CASE("lp text dump carries the standard sections") {
    MilpModel m;
    m.module_tag = "demo";
    m.add_binary("pick");
    m.add_var("flow", 0.0, 2.5, VarType::Continuous);
    MilpRow r;
    r.name = "link";
    r.idx = {0, 1};
    r.coef = {-2.0, 1.0};
    r.sense = RowSense::LE;
    r.rhs = 0.0;
    m.add_row(r);
    m.set_objective(0, 5.0);
    std::ostringstream os;
    write_lp_format(m, os);
    std::string text = os.str();
    CHECK(text.find("Minimize") != std::string::npos);
    CHECK(text.find("Subject To") != std::string::npos);
    CHECK(text.find("Bounds") != std::string::npos);
    CHECK(text.find("Binaries") != std::string::npos);
    CHECK(text.find("x_demo_pick") != std::string::npos);
    CHECK(text.find("x_demo_flow") != std::string::npos);
}
