#pragma once

#include "gridplan/milp.hpp"
#include "gridplan/network.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gridplan {

// Squared-voltage operating box shared by every planning model.
inline constexpr double kVoltMinSq = 0.81;
inline constexpr double kVoltMaxSq = 1.21;

// Degeneracy tie-breaks in the objective: a small price on declaring a node
// affected and a smaller reward for leaving a node unrestored. Together they
// pin the fault indicators to the restoration the oracle computes (affected
// set from feeder sharing, restoration by maximum load then fewest closed
// switches) at nodes that carry no load and no customers. Equivalent load
// nodes get a penalty instead of the reward: their service is priced by the
// sub-area model, so the backbone must restore them whenever a path exists.
inline constexpr double kTieEpsAffected = 3e-4;
inline constexpr double kTieEpsOutage = 2e-4;

// ---------------------------------------------------------------------------
// Big-M values, one per constraint family (never one global M)
// ---------------------------------------------------------------------------

double big_m_flow(double max_capacity_mva);
double big_m_voltage(double u_min_sq, double u_max_sq, double max_rx_per_km,
                     double length_km, double max_capacity_mva);
double big_m_product(double bound_a, double bound_b);

// ---------------------------------------------------------------------------
// Scenario set and variable atlas
// ---------------------------------------------------------------------------

struct ScenarioSet {
    // Scenario 0 is normal operation; scenario k (k >= 1) is a fault on
    // fault_branches[k-1]. Every branch of the view gets a fault scenario.
    std::vector<int> fault_branches;
    int count() const { return static_cast<int>(fault_branches.size()) + 1; }
    std::string name(int scen) const {
        return scen == 0 ? "NO" : "F" + std::to_string(fault_branches[scen - 1]);
    }
};

enum class ViewKind { Centralized, Backbone, SubArea };

// Index maps from paper symbols to model columns. -1 marks combinations that
// have no variable (fault indicators at source nodes, products with constant
// failure rate, and so on).
struct VariableAtlas {
    ViewKind kind = ViewKind::Centralized;
    int stages = 0;
    int n_nodes = 0, n_branches = 0, n_feeders = 0, n_slots = 0, n_ctypes = 0, n_ttypes = 0;
    ScenarioSet scenarios;
    std::vector<std::string> area_keys;           // SAIDI-constrained areas
    std::vector<std::vector<int>> area_nodes;     // node indices per area

    std::vector<char> is_source;  // per node: substation candidate/existing/EDS
    std::vector<char> is_eln;     // per node (backbone view)
    int eds_node = -1;            // sub-area view
    int eob_branch = -1;          // sub-area view

    // Flattened index tables; see the accessors for the layouts.
    std::vector<int> l, mtr, ns;
    std::vector<int> flow_p, flow_q, volt, sw;
    std::vector<int> inj_p, inj_q, u_ss;
    std::vector<int> p_aff, q_out, aux_lam_p, aux_lam_q;
    std::vector<int> h_node, h_branch;
    std::vector<int> cif, cid, saidi, eens;
    std::vector<int> aux_u;                    // [node][stage], sub-area only
    std::vector<int> aux_pd, aux_qd;           // [eln][fault][stage], backbone only
    std::vector<int> pd, qd, s_bd;             // [eln][stage], backbone only
    std::vector<int> eln_node;                 // node index per ELN
    int lam_eob = -1, u_eob = -1, s_eob = -1;  // flattened [stage] offsets below
    std::vector<int> lam_eob_v, u_eob_v, s_eob_v;  // [stage]

    int l_var(int branch, int ctype, int stage) const;
    int mtr_var(int slot, int ttype, int stage) const;
    int ns_var(int node, int stage) const;  // -1 for non-candidates
    int flow_p_var(int branch, int scen, int stage) const;
    int flow_q_var(int branch, int scen, int stage) const;
    int volt_var(int node, int scen, int stage) const;
    int sw_var(int branch, int scen, int stage) const;
    int inj_p_var(int node, int scen, int stage) const;
    int inj_q_var(int node, int scen, int stage) const;
    int u_ss_var(int node, int stage) const;
    int p_var(int node, int fault, int stage) const;   // fault is scen-1
    int q_var(int node, int fault, int stage) const;
    int aux_lam_p_var(int node, int fault, int stage) const;
    int aux_lam_q_var(int node, int fault, int stage) const;
    int aux_u_var(int node, int stage) const;
    int h_node_var(int node, int feeder, int stage) const;
    int h_branch_var(int branch, int feeder, int stage) const;
    int cif_var(int node, int stage) const;
    int cid_var(int node, int stage) const;
    int saidi_var(int area, int stage) const;
    int eens_var(int stage) const;
    int pd_var(int eln, int stage) const;
    int qd_var(int eln, int stage) const;
    int s_bd_var(int eln, int stage) const;
    int aux_pd_var(int eln, int fault, int stage) const;
    int aux_qd_var(int eln, int fault, int stage) const;

    // Failure rate of a branch at a stage, reconstructed from the solution's
    // investment binaries (and the EOB variable in sub-area views).
    double lambda_at(const Network& net, int branch, int stage, const Vector& x) const;
    // Installed capacity, same reconstruction.
    double capacity_at(const Network& net, int branch, int stage, const Vector& x) const;

    std::string dump_json() const;  // symbol -> column, deterministic order
};

struct BuildResult {
    MilpModel model;
    VariableAtlas atlas;
};

struct BuildOptions {
    bool structural_fixing = true;
    bool tie_breaks = true;
};

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

BuildResult build_centralized(const Network& net, const BuildOptions& opts = {});
BuildResult build_backbone_subproblem(const BackboneView& view, const BuildOptions& opts = {});
BuildResult build_subarea_subproblem(const SubAreaView& view, const BuildOptions& opts = {});

// ---------------------------------------------------------------------------
// Coordination selectors
// ---------------------------------------------------------------------------

// Column selectors realizing Q_b and Q_{s,n}: entry order per (area, stage) is
// (CIF, CID, P, Q, S, U), areas outer, stages inner.
struct Selectors {
    std::vector<int> backbone;          // length areas * stages * 6
    std::vector<std::vector<int>> sub;  // per area, length stages * 6
};

Selectors selection_matrices(const PartitionedNetwork& part, const VariableAtlas& backbone_atlas,
                             const std::vector<VariableAtlas>& sub_atlases);

// ---------------------------------------------------------------------------
// Plans
// ---------------------------------------------------------------------------

struct StageBuild {
    std::map<int, std::string> conductors;          // branch -> type installed this stage
    std::map<std::string, std::string> transformers;  // slot id -> type
    std::vector<std::string> substations;           // node ids built this stage
};

struct Plan {
    int stages = 0;
    std::vector<StageBuild> builds;
    std::vector<std::vector<int>> normal_closed;       // per stage, branch indices
    std::vector<std::map<std::string, std::string>> feeder_of;  // per stage
    std::map<std::string, double> boundary_values;     // decomposed runs only
    std::string network_hash;
};

// Equipment alive at a stage under a plan (existing + installs - aging).
std::optional<std::string> alive_conductor(const Network& net, const Plan& plan,
                                           int branch, int stage);
std::optional<std::string> alive_transformer(const Network& net, const Plan& plan,
                                             const std::string& slot_id, int stage);
bool substation_exists(const Network& net, const Plan& plan, const std::string& node_id, int stage);

Plan extract_plan(const VariableAtlas& atlas, const Network& net, const MilpSolution& sol);

// ---------------------------------------------------------------------------
// Reliability indices recomputed from a solution
// ---------------------------------------------------------------------------

struct IndicesReport {
    std::vector<std::string> node_ids;  // non-source nodes of the view
    Matrix cif;                         // node x stage
    Matrix cid;
    std::map<std::string, Vector> saidi;  // per area
};

// Recomputes Eqs.-style sums arithmetically from the solution's fault
// indicators and investment binaries, checks them against the model's own
// index variables (1e-6), and returns them.
IndicesReport internal_reliability_indices(const VariableAtlas& atlas, const Network& net,
                                           const MilpSolution& sol);

}  // namespace gridplan
