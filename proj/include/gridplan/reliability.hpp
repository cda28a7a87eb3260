#pragma once

#include "gridplan/builder.hpp"
#include "gridplan/milp.hpp"
#include "gridplan/network.hpp"

#include <map>
#include <string>
#include <vector>

namespace gridplan {

// Analytical reliability assessment of a fixed plan: one fault simulation per
// built branch, restoration re-optimized from scratch through milp-core.

struct FaultOutcome {
    int branch = -1;
    std::vector<char> affected;  // per node (p)
    std::vector<char> outage;    // per node after reconfiguration (q)
    std::vector<int> restoration_closed;  // branch indices
};

struct ReliabilityReport {
    std::vector<std::string> node_ids;
    Matrix cif;  // node x stage
    Matrix cid;  // node x stage
    std::map<std::string, Vector> saidi;        // per area
    std::vector<std::vector<FaultOutcome>> detail;  // per stage
    std::string network_hash;

    double cif_of(const std::string& node_id, int stage) const;
    double cid_of(const std::string& node_id, int stage) const;
    std::string to_json() const;
    std::string to_csv() const;
};

// Feeder labels induced by a closed-branch set: node id -> feeder id.
std::map<std::string, std::string> feeder_labels(const Network& net,
                                                 const std::vector<int>& closed,
                                                 int stage_for_equipment, const Plan& plan);

// Affected set and optimal post-fault restoration for one fault.
FaultOutcome simulate_fault(const Network& net, const Plan& plan, int stage, int fault_branch,
                            const SolverConfig& solver = {});

ReliabilityReport evaluate_plan_reliability(const Network& net, const Plan& plan,
                                            const SolverConfig& solver = {});

struct RequirementsResult {
    bool pass = false;
    // area -> margin (limit - worst-stage SAIDI); negative margins fail.
    std::map<std::string, double> margin;
};

RequirementsResult check_requirements(const ReliabilityReport& report,
                                      const PlanningHorizon& horizon);

}  // namespace gridplan
