#include "gridplan/logging.hpp"
#include "gridplan/milp.hpp"
#include "simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <tuple>

namespace gridplan {

using detail::BoundedSimplex;
using detail::LpStatus;
using detail::PresolveResult;
using detail::SimplexOutcome;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

MilpSolution finish_from_reduced(const MilpModel& model, const PresolveResult& pre,
                                 const Vector& reduced_x, double objective) {
    MilpSolution sol;
    sol.status = SolveStatus::Optimal;
    sol.values = pre.lift(reduced_x, model.num_vars());
    sol.objective = objective;
    sol.best_bound = objective;
    sol.bound_gap = 0.0;
    return sol;
}

// Outcome of presolve when nothing is left to optimize.
MilpSolution all_fixed_solution(const MilpModel& model, const PresolveResult& pre) {
    MilpSolution sol;
    sol.status = SolveStatus::Optimal;
    sol.values = pre.lift(Vector(0), model.num_vars());
    sol.objective = model.objective_constant + pre.objective_shift;
    sol.best_bound = sol.objective;
    return sol;
}

}  // namespace

MilpSolution solve_lp(const MilpModel& model, const SolverConfig& config) {
    model.check_well_formed();
    PresolveResult pre = detail::presolve_model(model, /*integral=*/false, config.feas_tol);
    if (pre.infeasible) {
        MilpSolution sol;
        sol.status = SolveStatus::Infeasible;
        sol.infeasibility_hint = pre.infeasible_hint;
        return sol;
    }
    if (pre.kept_vars.empty()) return all_fixed_solution(model, pre);

    BoundedSimplex engine(pre.reduced, config.feas_tol);
    const int nr = pre.reduced.num_vars();
    Vector lb(nr), ub(nr);
    for (int j = 0; j < nr; ++j) {
        lb(j) = pre.reduced.vars[j].lb;
        ub(j) = pre.reduced.vars[j].ub;
    }
    SimplexOutcome out = engine.solve(lb, ub);
    MilpSolution sol;
    switch (out.status) {
        case LpStatus::Optimal:
            sol = finish_from_reduced(model, pre, out.x.head(nr), out.objective);
            break;
        case LpStatus::Infeasible:
            sol.status = SolveStatus::Infeasible;
            sol.infeasibility_hint = out.blocking_hint;
            break;
        case LpStatus::Unbounded:
            sol.status = SolveStatus::Unbounded;
            break;
    }
    return sol;
}

MilpSolution solve_milp(const MilpModel& model, const SolverConfig& config) {
    model.check_well_formed();
    PresolveResult pre = detail::presolve_model(model, /*integral=*/true, config.feas_tol);
    if (pre.infeasible) {
        MilpSolution sol;
        sol.status = SolveStatus::Infeasible;
        sol.infeasibility_hint = pre.infeasible_hint;
        return sol;
    }
    if (pre.kept_vars.empty()) return all_fixed_solution(model, pre);

    const MilpModel& rm = pre.reduced;
    const int nr = rm.num_vars();
    std::vector<int> binaries;
    for (int j = 0; j < nr; ++j)
        if (rm.vars[j].type == VarType::Binary) binaries.push_back(j);

    BoundedSimplex engine(rm, config.feas_tol);
    Vector root_lb(nr), root_ub(nr);
    for (int j = 0; j < nr; ++j) {
        root_lb(j) = rm.vars[j].lb;
        root_ub(j) = rm.vars[j].ub;
    }

    std::vector<int> priority(nr, 0);
    if (!model.branch_priority.empty())
        for (size_t k = 0; k < pre.kept_vars.size(); ++k)
            priority[k] = model.branch_priority[pre.kept_vars[k]];

    auto most_fractional = [&](const Vector& x) {
        int pick = -1;
        double best = config.int_tol;
        int best_tier = std::numeric_limits<int>::max();
        for (int j : binaries) {
            double frac = std::abs(x(j) - std::round(x(j)));
            if (frac <= config.int_tol) continue;
            if (priority[j] < best_tier) {
                best_tier = priority[j];
                best = frac;
                pick = j;
            } else if (priority[j] == best_tier && frac > best + 1e-15) {
                best = frac;
                pick = j;
            }
        }
        return pick;
    };

    struct Node {
        int parent = -1;
        int var = -1;       // branching variable fixed on entry to this node
        int value = 0;      // 0 or 1
        double lp_obj = 0;
        int branch_var = -1;  // fractional variable chosen from this node's LP
    };
    std::vector<Node> arena;
    // Best bound first; newest node among equal bounds, which keeps plateau
    // processing local to the warm basis.
    std::set<std::pair<double, long>> frontier;  // (lp bound, -node id)

    Vector lb = root_lb, ub = root_ub;
    auto compose_bounds = [&](int node_id) {
        lb = root_lb;
        ub = root_ub;
        for (int cur = node_id; cur >= 0; cur = arena[cur].parent) {
            const Node& nd = arena[cur];
            if (nd.var < 0) continue;
            if (nd.value == 0)
                ub(nd.var) = 0.0;
            else
                lb(nd.var) = 1.0;
        }
    };

    long node_count = 0;
    bool have_incumbent = false;
    Vector incumbent;
    double inc_obj = kInf;
    double root_obj = -kInf;

    auto prune_eps = [&]() {
        return have_incumbent ? config.rel_gap * std::max(1.0, std::abs(inc_obj)) : 0.0;
    };

    long total_lp_iters = 0;

    // Solve one node LP under the currently composed bounds. Returns true if
    // the node stays open (pushed to the frontier).
    auto eval_node = [&](int parent, int var, int value) -> bool {
        SimplexOutcome out = engine.solve(lb, ub);
        ++node_count;
        total_lp_iters += out.iterations;
        if (out.status == LpStatus::Infeasible) return false;
        if (out.status == LpStatus::Unbounded)
            throw SolverError("LP relaxation unbounded inside branch and bound");
        double obj = out.objective;
        if (have_incumbent && obj >= inc_obj - prune_eps()) return false;
        Vector x = out.x.head(nr);
        int bv = most_fractional(x);
        if (bv < 0) {
            if (!have_incumbent || obj < inc_obj - 1e-12) {
                have_incumbent = true;
                inc_obj = obj;
                incumbent = x;
            }
            return false;
        }
        Node nd;
        nd.parent = parent;
        nd.var = var;
        nd.value = value;
        nd.lp_obj = obj;
        nd.branch_var = bv;
        arena.push_back(nd);
        // Quantized keys group near-equal bounds into one plateau so the
        // newest-first tie-break keeps processing near the warm basis. The
        // floor keeps the reported bound conservative.
        double cell = std::max(1e-9, 0.05 * config.rel_gap * std::max(1.0, std::abs(obj)));
        frontier.insert({std::floor(obj / cell) * cell, -(static_cast<long>(arena.size()) - 1)});
        return true;
    };

    // Root node.
    {
        SimplexOutcome out = engine.solve(lb, ub);
        ++node_count;
        if (out.status == LpStatus::Infeasible) {
            MilpSolution sol;
            sol.status = SolveStatus::Infeasible;
            sol.infeasibility_hint = out.blocking_hint;
            return sol;
        }
        if (out.status == LpStatus::Unbounded) {
            MilpSolution sol;
            sol.status = SolveStatus::Unbounded;
            return sol;
        }
        root_obj = out.objective;
        Vector x = out.x.head(nr);
        int bv = most_fractional(x);
        if (bv < 0) {
            have_incumbent = true;
            inc_obj = out.objective;
            incumbent = x;
        } else {
            Node nd;
            nd.lp_obj = out.objective;
            nd.branch_var = bv;
            arena.push_back(nd);
            frontier.insert({out.objective, 0});  // node 0
        }
    }

    // Deterministic rounding dive for incumbents: fix-and-flip with one-level
    // backtracking. Starts from whatever bounds are currently composed.
    auto dive = [&]() {
        struct Fix {
            int var;
            int value;
            bool flipped;
        };
        std::vector<Fix> fixes;
        const int cap = 3 * static_cast<int>(binaries.size()) + 30;
        for (int step = 0; step < cap; ++step) {
            SimplexOutcome out = engine.solve(lb, ub);
            if (out.status != LpStatus::Optimal) {
                // Undo or flip the most recent fixes until something gives.
                bool recovered = false;
                while (!fixes.empty()) {
                    Fix& f = fixes.back();
                    if (!f.flipped) {
                        f.flipped = true;
                        f.value = 1 - f.value;
                        lb(f.var) = f.value;
                        ub(f.var) = f.value;
                        recovered = true;
                        break;
                    }
                    lb(f.var) = root_lb(f.var);
                    ub(f.var) = root_ub(f.var);
                    fixes.pop_back();
                }
                if (!recovered) return;
                continue;
            }
            if (have_incumbent && out.objective >= inc_obj - 1e-12) return;
            Vector x = out.x.head(nr);
            int bv = most_fractional(x);
            if (bv < 0) {
                have_incumbent = true;
                inc_obj = out.objective;
                incumbent = x;
                log_info("bnb " + model.module_tag + ": dive incumbent " + std::to_string(inc_obj));
                return;
            }
            int val = x(bv) >= 0.5 ? 1 : 0;
            lb(bv) = val;
            ub(bv) = val;
            fixes.push_back({bv, val, false});
        }
    };

    if (!frontier.empty()) {
        lb = root_lb;
        ub = root_ub;
        dive();
    }

    double best_bound = have_incumbent && frontier.empty() ? inc_obj : root_obj;
    bool hit_node_limit = false;

    long last_logged = 0;
    while (!frontier.empty()) {
        auto it = frontier.begin();
        double bound = it->first;
        long id = -it->second;
        frontier.erase(it);
        best_bound = bound;

        if (node_count - last_logged >= 50) {
            last_logged = node_count;
            log_info("bnb " + model.module_tag + ": nodes=" + std::to_string(node_count) +
                     " bound=" + std::to_string(bound) +
                     " inc=" + (have_incumbent ? std::to_string(inc_obj) : std::string("none")) +
                     " frontier=" + std::to_string(frontier.size()) +
                     " iters/node=" + std::to_string(total_lp_iters / std::max(1L, node_count)));
        }

        if (have_incumbent) {
            double scale = std::max(1.0, std::abs(inc_obj));
            if (inc_obj - bound <= config.rel_gap * scale) break;  // proven within gap
            if (bound >= inc_obj - prune_eps()) continue;
        }
        if (node_count >= config.node_limit) {
            hit_node_limit = true;
            break;
        }

        // Periodic dives from the best node: on degenerate plateaus the bound
        // reaches the optimum long before plain branching stumbles onto an
        // integral point.
        if (node_count > 0 && node_count % 600 < 2) {
            compose_bounds(static_cast<int>(id));
            dive();
            if (have_incumbent) {
                double scale = std::max(1.0, std::abs(inc_obj));
                if (inc_obj - bound <= config.rel_gap * scale) break;
            }
        }

        const int bv = arena[id].branch_var;
        for (int value = 0; value <= 1; ++value) {
            compose_bounds(static_cast<int>(id));
            if (value == 0)
                ub(bv) = 0.0;
            else
                lb(bv) = 1.0;
            eval_node(static_cast<int>(id), bv, value);
        }
    }

    if (!frontier.empty()) {
        best_bound = std::min(best_bound, frontier.begin()->first);
    } else if (have_incumbent) {
        best_bound = inc_obj;
    }

    MilpSolution sol;
    sol.node_count = node_count;
    sol.best_bound = best_bound;
    if (!have_incumbent) {
        sol.status = hit_node_limit ? SolveStatus::NodeLimit : SolveStatus::Infeasible;
        sol.objective = kInf;
        return sol;
    }
    // Weak duality across the run: the root relaxation can never exceed the
    // integer optimum we report.
    if (root_obj > inc_obj + 1e-6 * std::max(1.0, std::abs(inc_obj)))
        throw SolverError("weak duality violated: root LP bound exceeds incumbent");

    sol.status = hit_node_limit ? SolveStatus::NodeLimit : SolveStatus::Optimal;
    sol.values = pre.lift(incumbent, model.num_vars());
    sol.objective = inc_obj;
    double scale = std::max(1.0, std::abs(inc_obj));
    sol.bound_gap = std::max(0.0, (inc_obj - best_bound) / scale);
    return sol;
}

}  // namespace gridplan
