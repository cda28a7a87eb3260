#pragma once

#include "gridplan/builder.hpp"
#include "gridplan/milp.hpp"
#include "gridplan/network.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gridplan {

// ---------------------------------------------------------------------------
// Configuration and trace
// ---------------------------------------------------------------------------

struct CoordinationConfig {
    double gamma = 0.1;   // serious-step threshold
    int t_max = 3;        // inner Gauss-Seidel passes
    int k_max = 100;      // outer iterations
    double eps_tol = 0.0;  // <= 0 resolves to 1e-4 * (1 + |initial primal cost|)
    double rho0 = 1.0;
    double rho_min = 1e-3;
    double rho_max = 1e6;
    double delta = 0.99;  // restart threshold of the acceleration
    bool accelerate = true;
    int workers = 1;
    std::uint64_t seed = 0;
    SolverConfig milp;

    static CoordinationConfig from_json_text(const std::string& text);
    std::string to_json_text() const;
};

struct TraceRow {
    int k = 0;
    double sum_eps = 0.0;
    double eta = 0.0;
    double rho = 0.0;
    bool serious = false;
    bool restart = false;
    double incumbent_cost = 0.0;
    double wall_ms = 0.0;
};

struct ConvergenceTrace {
    std::vector<TraceRow> rows;
    std::string to_csv() const;           // k,sumEps,eta,rho,seriousStep,restart,incumbentCost,wallMs
    static ConvergenceTrace from_csv(const std::string& text);
};

// ---------------------------------------------------------------------------
// Vertex sets (inner approximation D of conv(X))
// ---------------------------------------------------------------------------

class VertexSet {
public:
    static constexpr double kDedupTol = 1e-9;
    static constexpr int kCapacity = 200;

    // Returns the index of the vertex (existing on dedup), or -1 if rejected.
    int add(Vector x, double fcost, Vector qx);
    int size() const { return static_cast<int>(vertices_.size()); }
    const Vector& vertex(int i) const { return vertices_[i]; }
    const Vector& qx(int i) const { return qx_[i]; }
    double fcost(int i) const { return fcost_[i]; }
    void touch(int i) { last_used_[i] = ++clock_; }
    void mark_best(int i) { best_ = i; }

private:
    std::vector<Vector> vertices_;
    std::vector<double> fcost_;
    std::vector<Vector> qx_;
    std::vector<long> last_used_;
    long clock_ = 0;
    int best_ = -1;
};

// ---------------------------------------------------------------------------
// Core operations (exposed for unit tests)
// ---------------------------------------------------------------------------

// Pairwise mean of the backbone-side slice and the sub-area slices; the
// backbone slice concatenates the per-area segments in area order.
Vector project_coordination(const Vector& backbone_slice, const std::vector<Vector>& sub_slices);

struct HullPoint {
    Vector theta;   // simplex weights over the vertex set
    Vector qx;      // boundary image of the hull point
    double fvalue = 0.0;
    double lagrangian = 0.0;
    bool exact = true;
};

// argmin over conv(D) of f(x) + w'Qx + rho/2 ||Qx - z||^2, solved as a convex
// QP in the simplex weights via projected gradient.
HullPoint minimize_over_hull(const VertexSet& D, const Vector& w, const Vector& z, double rho);

struct DualResult {
    double phi = 0.0;   // valid lower bound of min f + w'Qx over X
    bool exact = true;
    std::optional<Vector> vertex;  // argmin when available
    double vertex_cost = 0.0;      // f at the vertex
};

// min f(x) + wplus'Qx over X, through the MILP engine. The selector gives the
// columns of Qx in pairing order.
DualResult evaluate_dual(const MilpModel& model, const std::vector<int>& selector,
                         const Vector& wplus, const SolverConfig& milp_cfg);

// Step 7 penalty recursion, exactly as printed.
double update_penalty(double rho, double eta, double rho_min, double rho_max);

// Serious-step test quantity (ratio of summed dual progress to summed gaps,
// denominator floored).
double serious_step_eta(double sum_dphi, double sum_eps);

// One acceleration decision per serious step.
struct AccelDecision {
    bool restart = false;
    double alpha_next = 1.0;
    double momentum = 0.0;  // (alpha_k - 1) / alpha_{k+1}; 0 on restart
    double c_out = 0.0;     // stored residual history after the step
};
AccelDecision accelerate_multipliers(double alpha, double c_k, double c_prev, double delta);

// ---------------------------------------------------------------------------
// Coordination state and runner
// ---------------------------------------------------------------------------

struct CoordinationState {
    int k = 0;
    double rho = 1.0;
    double alpha = 1.0;
    double c_prev = std::numeric_limits<double>::infinity();
    Vector z;                       // pair space, one value per paired component
    Vector w_backbone;              // pair space
    std::vector<Vector> w_sub;      // per area segment
    Vector what_backbone;
    std::vector<Vector> what_sub;
    Vector w_prev_backbone;
    std::vector<Vector> w_prev_sub;
    double phi_lb_backbone = 0.0;   // dual lower bounds
    std::vector<double> phi_lb_sub;
    double eps_tol = 0.0;
    bool converged = false;
};

struct SubproblemSolution {
    MilpSolution solution;
    IndicesReport indices;
};

struct CoordinationResult {
    Plan plan;
    double total_cost = 0.0;
    double final_gap = 0.0;
    bool converged = false;
    int iterations = 0;
    int repair_rung = 0;  // 0 exact pin, 1 banded pin, 2 sequential stitch
    ConvergenceTrace trace;
    // Final per-subproblem solutions with boundaries pinned to actual values.
    SubproblemSolution backbone;
    std::vector<SubproblemSolution> sub;
    int max_subproblem_binaries = 0;
    double sum_dual_lb = 0.0;
};

CoordinationResult run_coordination(const PartitionedNetwork& part,
                                    const CoordinationConfig& config);

// Deterministic fork-join helper shared by the coordination phases.
void run_parallel(int workers, int n_tasks, const std::function<void(int)>& fn);

}  // namespace gridplan
