#pragma once

// Internal engine behind solve_lp / solve_milp: root presolve plus a
// bounded-variable revised primal simplex with a composite phase 1. The basis
// is kept in product form over a periodically refreshed sparse LU
// factorization, so a pivot costs O(eta * m) instead of O(m^2).
// Not part of the public interface.

#include "gridplan/milp.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace gridplan::detail {

// ---------------------------------------------------------------------------
// Presolve
// ---------------------------------------------------------------------------

struct PresolveResult {
    bool infeasible = false;
    std::string infeasible_hint;

    MilpModel reduced;             // live rows/vars only, indices remapped
    std::vector<int> kept_vars;    // reduced var -> original var
    std::vector<double> fixed_value;  // original var -> value (valid if fixed)
    std::vector<char> is_fixed;       // original var -> flag
    double objective_shift = 0.0;     // contribution of fixed vars

    Vector lift(const Vector& reduced_x, int n_orig) const;
};

// integral = true allows integrality-based bound rounding on binaries.
PresolveResult presolve_model(const MilpModel& model, bool integral, double feas_tol);

// ---------------------------------------------------------------------------
// Simplex core
// ---------------------------------------------------------------------------

enum class VarStatus : std::uint8_t { Basic = 0, AtLower, AtUpper, FreeZero };

enum class LpStatus { Optimal, Infeasible, Unbounded };

struct SimplexOutcome {
    LpStatus status = LpStatus::Infeasible;
    Vector x;                // size n+m
    double objective = 0.0;  // c'x + c0
    long iterations = 0;
    std::string blocking_hint;  // row name driving phase-1 failure
};

// Computational form: min c'x, A x + s = b, bounds on x and s.
// Columns [0,n) structural, [n, n+m) slacks.
class BoundedSimplex {
public:
    BoundedSimplex(const MilpModel& reduced_model, double feas_tol);

    int num_structural() const { return n_; }
    int num_rows() const { return m_; }

    // Solves with the given structural bounds (size n). Slack bounds come from
    // row senses. Continues from the internal basis state unless reset.
    SimplexOutcome solve(const Vector& lb, const Vector& ub);

    void reset_basis();

private:
    int m_ = 0, n_ = 0;
    Eigen::SparseMatrix<double> A_;   // m x n, column major
    Eigen::SparseMatrix<double> At_;  // n x m, for fast dual pricing
    Vector b_;
    Vector c_;
    double c0_ = 0.0;
    Vector slack_lb_, slack_ub_;
    std::vector<std::string> row_names_;
    double feas_tol_ = 1e-7;

    // Basis state: sparse LU of the reference basis plus an eta file.
    struct Eta {
        int r;
        double wr;
        Vector w;
    };
    mutable Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;  // transpose solves mutate scratch state
    bool lu_ready_ = false;
    std::vector<Eta> etas_;
    std::vector<int> basic_;
    std::vector<VarStatus> status_;
    Vector x_;
    Vector lb_, ub_;

    Vector ftran(const Vector& rhs) const;  // B^-1 rhs
    Vector btran(const Vector& rhs) const;  // B^-T rhs
    Vector column_dense(int j) const;
    void refactorize();
    void recompute_basics();
    double infeasibility_sum() const;
    bool price_and_pivot(bool phase1, bool bland, bool& progressed, bool& unbounded_hit);
    Vector basic_costs(bool phase1) const;
};

}  // namespace gridplan::detail
