#pragma once

#include "gridplan/types.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gridplan {

// ---------------------------------------------------------------------------
// Equipment catalog
// ---------------------------------------------------------------------------

struct ConductorType {
    std::string id;
    double capacity_mva = 0.0;         // apparent power rating
    double resistance_per_km = 0.0;    // pu/km against squared-voltage drop
    double reactance_per_km = 0.0;
    double failure_rate_per_km = 0.0;  // faults/(km*yr)
    int lifespan_stages = 1;
    int remaining_lifespan_stages = 1;  // for pre-existing installs
    double invest_cost = 0.0;           // k$/km
    double maint_cost = 0.0;            // k$/(km*yr)
};

struct TransformerType {
    std::string id;
    double capacity_mva = 0.0;
    int lifespan_stages = 1;
    int remaining_lifespan_stages = 1;
    double invest_cost = 0.0;  // k$
    double maint_cost = 0.0;   // k$/yr
};

struct Catalog {
    std::vector<ConductorType> conductors;
    std::vector<TransformerType> transformers;

    const ConductorType* find_conductor(const std::string& id) const;
    const TransformerType* find_transformer(const std::string& id) const;
    double max_conductor_capacity() const;
    double max_conductor_failure_rate_per_km() const;
    double max_conductor_rx_per_km() const;
};

// ---------------------------------------------------------------------------
// Physical network
// ---------------------------------------------------------------------------

struct SubstationInfo {
    bool candidate = false;
    bool existing = false;  // n_s^0
    double invest_cost = 0.0;
    double maint_cost = 0.0;
    int max_transformers = 0;  // N_s
};

struct Node {
    std::string id;
    std::vector<double> load_p;  // MW per stage
    std::vector<double> load_q;  // Mvar per stage
    long customers = 0;          // N_i^C
    SubstationInfo substation;

    bool source_candidate() const { return substation.candidate || substation.existing; }
};

struct Branch {
    std::string from;
    std::string to;
    double length_km = 0.0;
    std::string existing_conductor;  // empty if the corridor is bare
    double switch_time_h = 0.0;      // tau^SW
    double repair_time_h = 0.0;      // tau^RP
};

struct TransformerSlot {
    std::string id;
    std::string node;
    int outlet_branch = -1;  // index into Network::branches
};

struct Feeder {
    std::string id;
    int head_branch = -1;  // index into Network::branches
};

struct PlanningHorizon {
    int stages = 1;
    // Year boundaries, length stages+1: stage t covers years
    // [stage_years[t-1], stage_years[t]-1].
    std::vector<int> stage_years;
    double interest_rate = 0.0;
    double eens_weight = 0.0;                 // omega, k$/MWh
    std::map<std::string, double> saidi_limit;  // per-area, h/(customer*yr)
};

struct SubAreaSpec {
    std::vector<std::string> nodes;
    int boundary_branch = -1;  // index into Network::branches
};

struct PartitionSpec {
    std::vector<std::string> backbone;
    std::vector<SubAreaSpec> sub_areas;
};

struct Network {
    std::vector<Node> nodes;
    std::vector<Branch> branches;
    std::vector<TransformerSlot> transformer_slots;
    std::vector<Feeder> feeders;
    Catalog catalog;
    PlanningHorizon horizon;
    PartitionSpec partition;

    int node_index(const std::string& id) const;  // -1 if absent
    const Node& node(const std::string& id) const;
    std::vector<int> branches_at(int node_idx) const;
    double total_load_p(int stage) const;  // stage is 1-based
    double total_load_q(int stage) const;
};

// ---------------------------------------------------------------------------
// Ingestion and validation
// ---------------------------------------------------------------------------

Network load_network(const std::string& path);
Network network_from_json_text(const std::string& text);
std::string network_to_json_text(const Network& net);

// FNV-1a over the canonical JSON serialization.
std::string network_hash(const Network& net);

struct Violation {
    std::string where;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};

ValidationReport validate_network(const Network& net);

// ---------------------------------------------------------------------------
// Aging vectors and present-value factors
// ---------------------------------------------------------------------------

enum class EquipmentKind { Conductor, Transformer };

// 0/1 vector over stages (1-based stages; element [t-1] is stage t).
// install_stage 0 means pre-existing: the remaining lifespan applies.
std::vector<int> aging_vector(EquipmentKind kind, const Catalog& catalog,
                              const std::string& type_id, int install_stage,
                              const PlanningHorizon& horizon);

struct PresentValueFactors {
    Vector invest;   // delta_t^I, per stage
    Vector operate;  // delta_t^O, per stage
};

PresentValueFactors present_value_factors(const PlanningHorizon& horizon);

// ---------------------------------------------------------------------------
// Partitioning into backbone and sub-area views
// ---------------------------------------------------------------------------

// Bounds of the boundary attributes of an equivalent element; shared between
// the ELN (backbone side) and the EOB/EDS (sub-area side) so the paired
// coordination variables live in identical boxes.
struct BoundaryBounds {
    double p_max = 0.0;    // equivalent load / normal feed, MW
    double q_max = 0.0;
    double cif_max = 0.0;  // = lambda bound of the EOB
    double cid_max = 0.0;  // = u bound of the EOB
    double s_max = 0.0;    // boundary branch capacity bound
};

struct ElnInfo {
    std::string node_id;        // id of the equivalent load node in the view
    int area_index = -1;
    int boundary_branch = -1;   // branch index within the view
    long customers = 0;         // aggregated, informational
    BoundaryBounds bounds;
};

struct BackboneView {
    Network net;  // backbone nodes plus one ELN per sub-area
    std::vector<ElnInfo> elns;
    std::vector<int> orig_branch;  // view branch -> original branch (-1 for none)
    std::map<std::string, std::string> orig_node;  // view node id -> original id
};

struct EobInfo {
    std::string eds_node_id;
    int eob_branch = -1;  // branch index within the view
    BoundaryBounds bounds;
};

struct SubAreaView {
    Network net;  // area nodes plus the EDS; EOB is the last branch
    int area_index = -1;
    std::string area_key;  // key into horizon.saidi_limit, "s<k>"
    EobInfo eob;
    std::vector<int> orig_branch;
    std::map<std::string, std::string> orig_node;
};

// Order of the six paired boundary quantities per (area, stage).
enum class BoundaryQuantity { Cif = 0, Cid, P, Q, S, U };
inline constexpr int kBoundaryQuantities = 6;

struct PartitionedNetwork {
    Network original;
    BackboneView backbone;
    std::vector<SubAreaView> sub_areas;

    // Total number of paired coordination components: areas * stages * 6.
    int coordination_size() const;
};

PartitionedNetwork partition_network(const Network& net, const PartitionSpec& spec);
PartitionedNetwork partition_network(const Network& net);  // uses net.partition

}  // namespace gridplan
