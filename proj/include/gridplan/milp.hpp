#pragma once

#include "gridplan/types.hpp"

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace gridplan {

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

enum class VarType { Continuous, Binary };

struct MilpVar {
    std::string name;
    double lb = 0.0;
    double ub = 0.0;
    VarType type = VarType::Continuous;
};

enum class RowSense { LE, EQ, GE };

struct MilpRow {
    std::string name;  // carries the constraint family for diagnostics
    std::vector<int> idx;
    std::vector<double> coef;
    RowSense sense = RowSense::LE;
    double rhs = 0.0;
};

struct MilpModel {
    std::string module_tag = "model";
    std::vector<MilpVar> vars;
    std::vector<MilpRow> rows;
    std::vector<double> objective;      // minimize
    double objective_constant = 0.0;
    // Optional branching tiers (lower first); empty means one tier for all.
    // Branching stays most-fractional within the lowest tier that still has
    // fractional binaries.
    std::vector<int> branch_priority;

    int add_var(const std::string& name, double lb, double ub, VarType type);
    int add_binary(const std::string& name) { return add_var(name, 0.0, 1.0, VarType::Binary); }
    void add_row(MilpRow row);
    void set_objective(int var, double coef);
    void add_objective(int var, double coef);

    int num_vars() const { return static_cast<int>(vars.size()); }
    int num_rows() const { return static_cast<int>(rows.size()); }
    int num_binaries() const;

    // Throws Error on malformed input (unbounded integers, bad indices,
    // binaries outside [0,1]).
    void check_well_formed() const;
};

// ---------------------------------------------------------------------------
// Solutions
// ---------------------------------------------------------------------------

enum class SolveStatus { Optimal, Infeasible, Unbounded, NodeLimit };

std::string to_string(SolveStatus s);

struct MilpSolution {
    SolveStatus status = SolveStatus::Infeasible;
    Vector values;          // full variable vector (structural vars only)
    double objective = 0.0;  // includes the model's objective constant
    double best_bound = 0.0;
    double bound_gap = 0.0;  // relative; 0 for LP optima
    long node_count = 0;
    // Heuristic tag of the constraint family blocking feasibility (set when
    // status == Infeasible and the engine could identify one).
    std::string infeasibility_hint;
};

struct SolverConfig {
    double feas_tol = 1e-7;
    double int_tol = 1e-6;
    double rel_gap = 1e-6;
    long node_limit = 500000;
    int tie_break_rule = 0;  // 0 = lowest index; kept for interface stability
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// Solves the LP relaxation (integrality dropped). Deterministic: Dantzig
// pricing with lowest-index ties, Bland's rule on degeneracy streaks.
MilpSolution solve_lp(const MilpModel& model, const SolverConfig& config = {});

// Best-bound branch and bound on the most fractional binary.
MilpSolution solve_milp(const MilpModel& model, const SolverConfig& config = {});

struct PointEvaluation {
    bool feasible = false;
    double worst_violation = 0.0;
    double max_constraint_violation = 0.0;
    double max_bound_violation = 0.0;
    double max_integrality_violation = 0.0;
    double objective = 0.0;
};

PointEvaluation evaluate_point(const MilpModel& model, const Vector& point,
                               double feas_tol = 1e-7, double int_tol = 1e-6);

// CPLEX-style LP text format (Minimize / Subject To / Bounds / Binaries),
// variables named x_<module_tag>_<name>.
void write_lp_format(const MilpModel& model, std::ostream& out);

// Adapter seam for plugging an external engine behind the same contract.
// The built-in engine is the default and the only one shipped.
class MilpBackend {
public:
    virtual ~MilpBackend() = default;
    virtual MilpSolution solve(const MilpModel& model, const SolverConfig& config) = 0;
};

class BuiltinMilpBackend final : public MilpBackend {
public:
    MilpSolution solve(const MilpModel& model, const SolverConfig& config) override {
        return solve_milp(model, config);
    }
};

}  // namespace gridplan
