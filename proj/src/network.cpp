#include "gridplan/network.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace gridplan {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Catalog helpers
// ---------------------------------------------------------------------------

const ConductorType* Catalog::find_conductor(const std::string& id) const {
    for (const auto& c : conductors)
        if (c.id == id) return &c;
    return nullptr;
}

const TransformerType* Catalog::find_transformer(const std::string& id) const {
    for (const auto& t : transformers)
        if (t.id == id) return &t;
    return nullptr;
}

double Catalog::max_conductor_capacity() const {
    double s = 0.0;
    for (const auto& c : conductors) s = std::max(s, c.capacity_mva);
    return s;
}

double Catalog::max_conductor_failure_rate_per_km() const {
    double s = 0.0;
    for (const auto& c : conductors) s = std::max(s, c.failure_rate_per_km);
    return s;
}

double Catalog::max_conductor_rx_per_km() const {
    double s = 0.0;
    for (const auto& c : conductors)
        s = std::max({s, c.resistance_per_km, c.reactance_per_km});
    return s;
}

// ---------------------------------------------------------------------------
// Network helpers
// ---------------------------------------------------------------------------

int Network::node_index(const std::string& id) const {
    for (size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i].id == id) return static_cast<int>(i);
    return -1;
}

const Node& Network::node(const std::string& id) const {
    int idx = node_index(id);
    if (idx < 0) throw ReferenceError("unknown node id: " + id);
    return nodes[idx];
}

std::vector<int> Network::branches_at(int node_idx) const {
    std::vector<int> out;
    const std::string& id = nodes.at(node_idx).id;
    for (size_t b = 0; b < branches.size(); ++b)
        if (branches[b].from == id || branches[b].to == id) out.push_back(static_cast<int>(b));
    return out;
}

double Network::total_load_p(int stage) const {
    double s = 0.0;
    for (const auto& n : nodes)
        if (stage - 1 < static_cast<int>(n.load_p.size())) s += n.load_p[stage - 1];
    return s;
}

double Network::total_load_q(int stage) const {
    double s = 0.0;
    for (const auto& n : nodes)
        if (stage - 1 < static_cast<int>(n.load_q.size())) s += n.load_q[stage - 1];
    return s;
}

// ---------------------------------------------------------------------------
// JSON ingestion
// ---------------------------------------------------------------------------

namespace {

const json& require(const json& j, const char* key, const std::string& ctx) {
    auto it = j.find(key);
    if (it == j.end())
        throw ParseError("missing field \"" + std::string(key) + "\" in " + ctx);
    return *it;
}

double num(const json& j, const char* key, const std::string& ctx) {
    const json& v = require(j, key, ctx);
    if (!v.is_number()) throw ParseError("field \"" + std::string(key) + "\" in " + ctx + " is not a number");
    return v.get<double>();
}

int integer(const json& j, const char* key, const std::string& ctx) {
    const json& v = require(j, key, ctx);
    if (!v.is_number_integer()) throw ParseError("field \"" + std::string(key) + "\" in " + ctx + " is not an integer");
    return v.get<int>();
}

std::string str(const json& j, const char* key, const std::string& ctx) {
    const json& v = require(j, key, ctx);
    if (!v.is_string()) throw ParseError("field \"" + std::string(key) + "\" in " + ctx + " is not a string");
    return v.get<std::string>();
}

std::vector<double> num_array(const json& j, const char* key, const std::string& ctx) {
    const json& v = require(j, key, ctx);
    if (!v.is_array()) throw ParseError("field \"" + std::string(key) + "\" in " + ctx + " is not an array");
    std::vector<double> out;
    for (const auto& e : v) out.push_back(e.get<double>());
    return out;
}

}  // namespace

Network network_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what());
    }

    Network net;

    const json& jh = require(j, "horizon", "document");
    net.horizon.stages = integer(jh, "stages", "horizon");
    for (const auto& y : require(jh, "stageYears", "horizon")) net.horizon.stage_years.push_back(y.get<int>());
    net.horizon.interest_rate = num(jh, "interestRate", "horizon");
    net.horizon.eens_weight = num(jh, "eensWeight", "horizon");
    const json& jl = require(jh, "saidiLimit", "horizon");
    for (auto it = jl.begin(); it != jl.end(); ++it) net.horizon.saidi_limit[it.key()] = it.value().get<double>();

    const json& jc = require(j, "catalog", "document");
    for (const auto& c : require(jc, "conductors", "catalog")) {
        ConductorType ct;
        ct.id = str(c, "id", "conductor");
        ct.capacity_mva = num(c, "capacityMVA", "conductor " + ct.id);
        ct.resistance_per_km = num(c, "rPerKm", "conductor " + ct.id);
        ct.reactance_per_km = num(c, "xPerKm", "conductor " + ct.id);
        ct.failure_rate_per_km = num(c, "lambdaPerKm", "conductor " + ct.id);
        ct.lifespan_stages = integer(c, "lifespanStages", "conductor " + ct.id);
        ct.remaining_lifespan_stages = integer(c, "remainingLifespanStages", "conductor " + ct.id);
        ct.invest_cost = num(c, "investCostPerKm", "conductor " + ct.id);
        ct.maint_cost = num(c, "maintCostPerKm", "conductor " + ct.id);
        net.catalog.conductors.push_back(ct);
    }
    for (const auto& t : require(jc, "transformers", "catalog")) {
        TransformerType tt;
        tt.id = str(t, "id", "transformer");
        tt.capacity_mva = num(t, "capacityMVA", "transformer " + tt.id);
        tt.lifespan_stages = integer(t, "lifespanStages", "transformer " + tt.id);
        tt.remaining_lifespan_stages = integer(t, "remainingLifespanStages", "transformer " + tt.id);
        tt.invest_cost = num(t, "investCost", "transformer " + tt.id);
        tt.maint_cost = num(t, "maintCost", "transformer " + tt.id);
        net.catalog.transformers.push_back(tt);
    }

    for (const auto& n : require(j, "nodes", "document")) {
        Node node;
        node.id = str(n, "id", "node");
        node.load_p = num_array(n, "loadP", "node " + node.id);
        node.load_q = num_array(n, "loadQ", "node " + node.id);
        node.customers = static_cast<long>(num(n, "customers", "node " + node.id));
        if (n.contains("substation")) {
            const json& s = n["substation"];
            node.substation.candidate = require(s, "candidate", "substation of " + node.id).get<bool>();
            node.substation.existing = require(s, "existing", "substation of " + node.id).get<bool>();
            node.substation.invest_cost = num(s, "investCost", "substation of " + node.id);
            node.substation.maint_cost = num(s, "maintCost", "substation of " + node.id);
            node.substation.max_transformers = integer(s, "maxTransformers", "substation of " + node.id);
        }
        net.nodes.push_back(node);
    }

    for (const auto& b : require(j, "branches", "document")) {
        Branch br;
        br.from = str(b, "from", "branch");
        br.to = str(b, "to", "branch");
        br.length_km = num(b, "lengthKm", "branch " + br.from + "-" + br.to);
        if (b.contains("existingConductor")) br.existing_conductor = b["existingConductor"].get<std::string>();
        br.switch_time_h = num(b, "switchTimeH", "branch " + br.from + "-" + br.to);
        br.repair_time_h = num(b, "repairTimeH", "branch " + br.from + "-" + br.to);
        net.branches.push_back(br);
    }

    for (const auto& t : require(j, "transformerSlots", "document")) {
        TransformerSlot slot;
        slot.id = str(t, "id", "transformerSlot");
        slot.node = str(t, "node", "transformerSlot " + slot.id);
        slot.outlet_branch = integer(t, "outletBranch", "transformerSlot " + slot.id);
        net.transformer_slots.push_back(slot);
    }

    for (const auto& f : require(j, "feeders", "document")) {
        Feeder fd;
        fd.id = str(f, "id", "feeder");
        fd.head_branch = integer(f, "headBranch", "feeder " + fd.id);
        net.feeders.push_back(fd);
    }

    const json& jp = require(j, "partition", "document");
    for (const auto& n : require(jp, "backbone", "partition")) net.partition.backbone.push_back(n.get<std::string>());
    for (const auto& a : require(jp, "subAreas", "partition")) {
        SubAreaSpec sa;
        for (const auto& n : require(a, "nodes", "subArea")) sa.nodes.push_back(n.get<std::string>());
        sa.boundary_branch = integer(a, "boundaryBranch", "subArea");
        net.partition.sub_areas.push_back(sa);
    }

    // Resolve all cross references eagerly so dangling ids fail at load time.
    for (const auto& br : net.branches) {
        if (net.node_index(br.from) < 0)
            throw ReferenceError("branch references unknown node \"" + br.from + "\"");
        if (net.node_index(br.to) < 0)
            throw ReferenceError("branch references unknown node \"" + br.to + "\"");
        if (!br.existing_conductor.empty() && net.catalog.find_conductor(br.existing_conductor) == nullptr)
            throw ReferenceError("branch references unknown conductor type \"" + br.existing_conductor + "\"");
    }
    auto check_branch_index = [&](int idx, const std::string& what) {
        if (idx < 0 || idx >= static_cast<int>(net.branches.size()))
            throw ReferenceError(what + " references unknown branch index " + std::to_string(idx));
    };
    for (const auto& s : net.transformer_slots) {
        if (net.node_index(s.node) < 0)
            throw ReferenceError("transformerSlot " + s.id + " references unknown node \"" + s.node + "\"");
        check_branch_index(s.outlet_branch, "transformerSlot " + s.id);
    }
    for (const auto& f : net.feeders) check_branch_index(f.head_branch, "feeder " + f.id);
    for (const auto& n : net.partition.backbone)
        if (net.node_index(n) < 0) throw ReferenceError("partition references unknown node \"" + n + "\"");
    for (const auto& a : net.partition.sub_areas) {
        for (const auto& n : a.nodes)
            if (net.node_index(n) < 0) throw ReferenceError("partition references unknown node \"" + n + "\"");
        check_branch_index(a.boundary_branch, "subArea");
    }

    return net;
}

Network load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open network file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return network_from_json_text(ss.str());
}

std::string network_to_json_text(const Network& net) {
    json j;
    j["horizon"]["stages"] = net.horizon.stages;
    j["horizon"]["stageYears"] = net.horizon.stage_years;
    j["horizon"]["interestRate"] = net.horizon.interest_rate;
    j["horizon"]["eensWeight"] = net.horizon.eens_weight;
    j["horizon"]["saidiLimit"] = net.horizon.saidi_limit;

    j["catalog"]["conductors"] = json::array();
    for (const auto& c : net.catalog.conductors) {
        json e;
        e["id"] = c.id;
        e["capacityMVA"] = c.capacity_mva;
        e["rPerKm"] = c.resistance_per_km;
        e["xPerKm"] = c.reactance_per_km;
        e["lambdaPerKm"] = c.failure_rate_per_km;
        e["lifespanStages"] = c.lifespan_stages;
        e["remainingLifespanStages"] = c.remaining_lifespan_stages;
        e["investCostPerKm"] = c.invest_cost;
        e["maintCostPerKm"] = c.maint_cost;
        j["catalog"]["conductors"].push_back(e);
    }
    j["catalog"]["transformers"] = json::array();
    for (const auto& t : net.catalog.transformers) {
        json e;
        e["id"] = t.id;
        e["capacityMVA"] = t.capacity_mva;
        e["lifespanStages"] = t.lifespan_stages;
        e["remainingLifespanStages"] = t.remaining_lifespan_stages;
        e["investCost"] = t.invest_cost;
        e["maintCost"] = t.maint_cost;
        j["catalog"]["transformers"].push_back(e);
    }

    j["nodes"] = json::array();
    for (const auto& n : net.nodes) {
        json e;
        e["id"] = n.id;
        e["loadP"] = n.load_p;
        e["loadQ"] = n.load_q;
        e["customers"] = n.customers;
        if (n.substation.candidate || n.substation.existing) {
            e["substation"]["candidate"] = n.substation.candidate;
            e["substation"]["existing"] = n.substation.existing;
            e["substation"]["investCost"] = n.substation.invest_cost;
            e["substation"]["maintCost"] = n.substation.maint_cost;
            e["substation"]["maxTransformers"] = n.substation.max_transformers;
        }
        j["nodes"].push_back(e);
    }

    j["branches"] = json::array();
    for (const auto& b : net.branches) {
        json e;
        e["from"] = b.from;
        e["to"] = b.to;
        e["lengthKm"] = b.length_km;
        if (!b.existing_conductor.empty()) e["existingConductor"] = b.existing_conductor;
        e["switchTimeH"] = b.switch_time_h;
        e["repairTimeH"] = b.repair_time_h;
        j["branches"].push_back(e);
    }

    j["transformerSlots"] = json::array();
    for (const auto& s : net.transformer_slots) {
        json e;
        e["id"] = s.id;
        e["node"] = s.node;
        e["outletBranch"] = s.outlet_branch;
        j["transformerSlots"].push_back(e);
    }

    j["feeders"] = json::array();
    for (const auto& f : net.feeders) {
        json e;
        e["id"] = f.id;
        e["headBranch"] = f.head_branch;
        j["feeders"].push_back(e);
    }

    j["partition"]["backbone"] = net.partition.backbone;
    j["partition"]["subAreas"] = json::array();
    for (const auto& a : net.partition.sub_areas) {
        json e;
        e["nodes"] = a.nodes;
        e["boundaryBranch"] = a.boundary_branch;
        j["partition"]["subAreas"].push_back(e);
    }

    return j.dump(2) + "\n";
}

std::string network_hash(const Network& net) {
    std::string canonical = network_to_json_text(net);
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : canonical) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace {

// Connectivity over the full candidate branch set.
bool candidate_graph_connected(const Network& net) {
    if (net.nodes.empty()) return true;
    std::vector<std::vector<int>> adj(net.nodes.size());
    for (const auto& b : net.branches) {
        int u = net.node_index(b.from);
        int v = net.node_index(b.to);
        if (u < 0 || v < 0) continue;
        adj[u].push_back(v);
        adj[v].push_back(u);
    }
    std::vector<char> seen(net.nodes.size(), 0);
    std::vector<int> stack = {0};
    seen[0] = 1;
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        for (int v : adj[u])
            if (!seen[v]) {
                seen[v] = 1;
                stack.push_back(v);
            }
    }
    return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
}

}  // namespace

ValidationReport validate_network(const Network& net) {
    ValidationReport rep;
    auto add = [&](const std::string& where, const std::string& msg) {
        rep.violations.push_back({where, msg});
    };

    for (const auto& c : net.catalog.conductors) {
        if (c.capacity_mva <= 0) add("conductor " + c.id, "capacity must be > 0");
        if (c.failure_rate_per_km < 0) add("conductor " + c.id, "failure rate must be >= 0");
        if (c.lifespan_stages < 1) add("conductor " + c.id, "lifespan must be >= 1 stage");
        if (c.remaining_lifespan_stages > c.lifespan_stages)
            add("conductor " + c.id, "remaining lifespan exceeds lifespan");
    }
    for (const auto& t : net.catalog.transformers) {
        if (t.capacity_mva <= 0) add("transformer " + t.id, "capacity must be > 0");
        if (t.lifespan_stages < 1) add("transformer " + t.id, "lifespan must be >= 1 stage");
        if (t.remaining_lifespan_stages > t.lifespan_stages)
            add("transformer " + t.id, "remaining lifespan exceeds lifespan");
    }

    const int T = net.horizon.stages;
    if (T < 1) add("horizon", "stages must be >= 1");
    if (static_cast<int>(net.horizon.stage_years.size()) != T + 1)
        add("horizon", "stageYears must have stages+1 entries");
    for (size_t i = 0; i + 1 < net.horizon.stage_years.size(); ++i)
        if (net.horizon.stage_years[i] >= net.horizon.stage_years[i + 1])
            add("horizon", "stageYears must be strictly increasing");
    if (net.horizon.interest_rate < 0) add("horizon", "interest rate must be >= 0");
    for (const auto& [area, lim] : net.horizon.saidi_limit)
        if (lim <= 0) add("horizon", "saidi limit for " + area + " must be > 0");

    for (const auto& n : net.nodes) {
        if (n.customers < 0) add("node " + n.id, "customers must be >= 0");
        if (static_cast<int>(n.load_p.size()) != T || static_cast<int>(n.load_q.size()) != T)
            add("node " + n.id, "load vectors must have one entry per stage");
        for (double v : n.load_p)
            if (v < 0) add("node " + n.id, "active load must be >= 0");
        for (double v : n.load_q)
            if (v < 0) add("node " + n.id, "reactive load must be >= 0");
    }

    for (size_t i = 0; i < net.branches.size(); ++i) {
        const auto& b = net.branches[i];
        std::string where = "branch " + std::to_string(i) + " (" + b.from + "-" + b.to + ")";
        if (b.length_km <= 0) add(where, "length must be > 0");
        if (b.from == b.to) add(where, "self-loop branch");
        if (b.switch_time_h < 0) add(where, "switch_time must be >= 0");
        if (b.switch_time_h > b.repair_time_h) add(where, "switch_time > repair_time");
    }

    for (const auto& s : net.transformer_slots) {
        if (s.outlet_branch < 0 || s.outlet_branch >= static_cast<int>(net.branches.size())) {
            add("transformerSlot " + s.id, "outlet branch out of range");
            continue;
        }
        const auto& b = net.branches[s.outlet_branch];
        if (b.from != s.node && b.to != s.node)
            add("transformerSlot " + s.id, "outlet branch is not incident to the slot node");
    }

    for (const auto& f : net.feeders) {
        if (f.head_branch < 0 || f.head_branch >= static_cast<int>(net.branches.size())) {
            add("feeder " + f.id, "head branch out of range");
            continue;
        }
        const auto& b = net.branches[f.head_branch];
        bool at_source = false;
        for (const auto& end : {b.from, b.to}) {
            int idx = net.node_index(end);
            if (idx >= 0 && net.nodes[idx].source_candidate()) at_source = true;
        }
        if (!at_source) add("feeder " + f.id, "head branch does not attach to a substation candidate");
    }

    if (!candidate_graph_connected(net)) add("network", "candidate branch graph is not connected");

    return rep;
}

// ---------------------------------------------------------------------------
// Aging vectors and present value
// ---------------------------------------------------------------------------

std::vector<int> aging_vector(EquipmentKind kind, const Catalog& catalog,
                              const std::string& type_id, int install_stage,
                              const PlanningHorizon& horizon) {
    int life = 0;
    int remaining = 0;
    if (kind == EquipmentKind::Conductor) {
        const ConductorType* c = catalog.find_conductor(type_id);
        if (c == nullptr) throw ReferenceError("unknown conductor type \"" + type_id + "\"");
        life = c->lifespan_stages;
        remaining = c->remaining_lifespan_stages;
    } else {
        const TransformerType* t = catalog.find_transformer(type_id);
        if (t == nullptr) throw ReferenceError("unknown transformer type \"" + type_id + "\"");
        life = t->lifespan_stages;
        remaining = t->remaining_lifespan_stages;
    }
    const int T = horizon.stages;
    if (install_stage < 0 || install_stage > T)
        throw Error("install stage out of range: " + std::to_string(install_stage));

    std::vector<int> g(T, 0);
    int first = install_stage == 0 ? 1 : install_stage;
    int span = install_stage == 0 ? remaining : life;
    for (int t = first; t <= std::min(T, first + span - 1); ++t) g[t - 1] = 1;
    return g;
}

PresentValueFactors present_value_factors(const PlanningHorizon& horizon) {
    const int T = horizon.stages;
    if (static_cast<int>(horizon.stage_years.size()) != T + 1)
        throw Error("stageYears must have stages+1 entries");
    PresentValueFactors pv;
    pv.invest.resize(T);
    pv.operate.resize(T);
    const double base = 1.0 + horizon.interest_rate;
    for (int t = 1; t <= T; ++t) {
        int y0 = horizon.stage_years[t - 1];
        int y1 = horizon.stage_years[t];
        if (y1 <= y0) throw Error("stageYears must be strictly increasing");
        pv.invest(t - 1) = std::pow(base, -y0);
        double acc = 0.0;
        for (int y = y0; y <= y1 - 1; ++y) acc += std::pow(base, -y);
        pv.operate(t - 1) = acc;
    }
    return pv;
}

// ---------------------------------------------------------------------------
// Partitioning
// ---------------------------------------------------------------------------

int PartitionedNetwork::coordination_size() const {
    return static_cast<int>(sub_areas.size()) * original.horizon.stages * kBoundaryQuantities;
}

PartitionedNetwork partition_network(const Network& net, const PartitionSpec& spec) {
    PartitionedNetwork part;
    part.original = net;

    // The node sets must form a partition of the network's nodes.
    std::set<std::string> seen;
    auto claim = [&](const std::string& id, const std::string& who) {
        if (net.node_index(id) < 0)
            throw PartitionError("partition references unknown node \"" + id + "\"");
        if (!seen.insert(id).second)
            throw PartitionError("node \"" + id + "\" assigned twice (" + who + ")");
    };
    for (const auto& id : spec.backbone) claim(id, "backbone");
    for (size_t a = 0; a < spec.sub_areas.size(); ++a)
        for (const auto& id : spec.sub_areas[a].nodes) claim(id, "sub-area " + std::to_string(a));
    if (seen.size() != net.nodes.size())
        throw PartitionError("partition node sets do not cover the network");

    std::map<std::string, int> area_of;  // node id -> area index, -1 backbone
    for (const auto& id : spec.backbone) area_of[id] = -1;
    for (size_t a = 0; a < spec.sub_areas.size(); ++a)
        for (const auto& id : spec.sub_areas[a].nodes) area_of[id] = static_cast<int>(a);

    // Every sub-area must touch the backbone through exactly one branch, and
    // it must be the declared boundary branch.
    const int n_areas = static_cast<int>(spec.sub_areas.size());
    std::vector<std::vector<int>> crossing(n_areas);
    for (size_t b = 0; b < net.branches.size(); ++b) {
        int af = area_of[net.branches[b].from];
        int at = area_of[net.branches[b].to];
        if (af == at) continue;
        if (af >= 0 && at >= 0)
            throw PartitionError("branch " + std::to_string(b) + " connects two sub-areas");
        int area = std::max(af, at);
        crossing[area].push_back(static_cast<int>(b));
    }
    for (int a = 0; a < n_areas; ++a) {
        if (crossing[a].size() != 1)
            throw PartitionError("sub-area " + std::to_string(a) + " has " +
                                 std::to_string(crossing[a].size()) + " boundary branches (need exactly 1)");
        if (crossing[a][0] != spec.sub_areas[a].boundary_branch)
            throw PartitionError("sub-area " + std::to_string(a) + " boundary branch mismatch: declared " +
                                 std::to_string(spec.sub_areas[a].boundary_branch) + ", found " +
                                 std::to_string(crossing[a][0]));
    }

    const int T = net.horizon.stages;
    const double u_min_sq = 0.81, u_max_sq = 1.21;  // matches builder voltage box
    (void)u_min_sq;
    (void)u_max_sq;

    // Shared boundary bounds per area.
    std::vector<BoundaryBounds> bounds(n_areas);
    // CIF bound: every backbone-side branch (incl. boundaries) at max failure rate.
    double lambda_sum = 0.0;
    double tau_rp_max = 0.0;
    for (size_t b = 0; b < net.branches.size(); ++b) {
        int af = area_of[net.branches[b].from];
        int at = area_of[net.branches[b].to];
        bool backbone_side = (af == -1 && at == -1) || af != at;
        if (!backbone_side) continue;
        lambda_sum += net.catalog.max_conductor_failure_rate_per_km() * net.branches[b].length_km;
        tau_rp_max = std::max(tau_rp_max, net.branches[b].repair_time_h);
    }
    for (int a = 0; a < n_areas; ++a) {
        double p_max = 0.0, q_max = 0.0;
        for (const auto& id : spec.sub_areas[a].nodes) {
            const Node& n = net.node(id);
            for (int t = 0; t < T; ++t) {
                p_max = std::max(p_max, static_cast<double>(n.load_p.size() > static_cast<size_t>(t) ? n.load_p[t] : 0.0));
            }
        }
        // Per-stage sums; the box uses the max over stages of the area total.
        double pt = 0.0, qt = 0.0;
        for (int t = 1; t <= T; ++t) {
            double sp = 0.0, sq = 0.0;
            for (const auto& id : spec.sub_areas[a].nodes) {
                const Node& n = net.node(id);
                sp += n.load_p[t - 1];
                sq += n.load_q[t - 1];
            }
            pt = std::max(pt, sp);
            qt = std::max(qt, sq);
        }
        bounds[a].p_max = pt;
        bounds[a].q_max = qt;
        bounds[a].cif_max = lambda_sum;
        bounds[a].cid_max = lambda_sum * tau_rp_max;
        bounds[a].s_max = net.catalog.max_conductor_capacity();
    }

    // ---- backbone view ----
    BackboneView& bb = part.backbone;
    for (const auto& id : spec.backbone) {
        bb.net.nodes.push_back(net.node(id));
        bb.orig_node[id] = id;
    }
    for (int a = 0; a < n_areas; ++a) {
        Node eln;
        eln.id = "eln" + std::to_string(a);
        eln.load_p.assign(T, 0.0);  // the equivalent load is a decision variable
        eln.load_q.assign(T, 0.0);
        long cust = 0;
        for (const auto& id : spec.sub_areas[a].nodes) cust += net.node(id).customers;
        eln.customers = 0;  // area customers are accounted in the sub-area model
        bb.net.nodes.push_back(eln);

        ElnInfo info;
        info.node_id = eln.id;
        info.area_index = a;
        info.customers = cust;
        info.bounds = bounds[a];
        bb.elns.push_back(info);
    }
    for (size_t b = 0; b < net.branches.size(); ++b) {
        int af = area_of[net.branches[b].from];
        int at = area_of[net.branches[b].to];
        if (af == -1 && at == -1) {
            bb.net.branches.push_back(net.branches[b]);
            bb.orig_branch.push_back(static_cast<int>(b));
        } else if (af != at && (af == -1 || at == -1)) {
            Branch br = net.branches[b];
            int area = std::max(af, at);
            if (af == -1)
                br.to = "eln" + std::to_string(area);
            else
                br.from = "eln" + std::to_string(area);
            bb.elns[area].boundary_branch = static_cast<int>(bb.net.branches.size());
            bb.net.branches.push_back(br);
            bb.orig_branch.push_back(static_cast<int>(b));
        }
    }
    // Slots and feeders living on backbone nodes carry over.
    std::map<int, int> orig_to_view_branch;
    for (size_t vb = 0; vb < bb.orig_branch.size(); ++vb) orig_to_view_branch[bb.orig_branch[vb]] = static_cast<int>(vb);
    for (const auto& s : net.transformer_slots) {
        if (area_of[s.node] != -1) continue;
        TransformerSlot slot = s;
        auto it = orig_to_view_branch.find(s.outlet_branch);
        if (it == orig_to_view_branch.end())
            throw PartitionError("transformer slot " + s.id + " outlet branch leaves the backbone");
        slot.outlet_branch = it->second;
        bb.net.transformer_slots.push_back(slot);
    }
    for (const auto& f : net.feeders) {
        const Branch& hb = net.branches[f.head_branch];
        int af = area_of[hb.from], at = area_of[hb.to];
        if (af != -1 && at != -1) continue;  // feeder rooted inside a sub-area
        Feeder fd = f;
        fd.head_branch = orig_to_view_branch.at(f.head_branch);
        bb.net.feeders.push_back(fd);
    }
    bb.net.catalog = net.catalog;
    bb.net.horizon = net.horizon;
    // The backbone keeps only its own SAIDI requirement, if one exists.
    bb.net.horizon.saidi_limit.clear();
    if (auto it = net.horizon.saidi_limit.find("backbone"); it != net.horizon.saidi_limit.end())
        bb.net.horizon.saidi_limit["backbone"] = it->second;

    // ---- sub-area views ----
    for (int a = 0; a < n_areas; ++a) {
        SubAreaView view;
        view.area_index = a;
        view.area_key = "s" + std::to_string(a);

        for (const auto& id : spec.sub_areas[a].nodes) {
            view.net.nodes.push_back(net.node(id));
            view.orig_node[id] = id;
        }
        Node eds;
        eds.id = "eds" + std::to_string(a);
        eds.load_p.assign(T, 0.0);
        eds.load_q.assign(T, 0.0);
        eds.customers = 0;
        eds.substation.candidate = false;
        eds.substation.existing = true;  // perfectly reliable source
        eds.substation.invest_cost = 0.0;
        eds.substation.maint_cost = 0.0;
        eds.substation.max_transformers = 0;
        view.net.nodes.push_back(eds);

        std::map<int, int> orig_to_view;
        for (size_t b = 0; b < net.branches.size(); ++b) {
            int af = area_of[net.branches[b].from];
            int at = area_of[net.branches[b].to];
            if (af == a && at == a) {
                orig_to_view[static_cast<int>(b)] = static_cast<int>(view.net.branches.size());
                view.net.branches.push_back(net.branches[b]);
                view.orig_branch.push_back(static_cast<int>(b));
            }
        }
        // The EOB replaces the boundary branch: it hangs the area off the EDS.
        const Branch& bd = net.branches[spec.sub_areas[a].boundary_branch];
        Branch eob;
        eob.from = eds.id;
        eob.to = area_of[bd.from] == a ? bd.from : bd.to;
        eob.length_km = bd.length_km;
        eob.switch_time_h = bd.switch_time_h;
        eob.repair_time_h = bd.repair_time_h;
        view.eob.eds_node_id = eds.id;
        view.eob.eob_branch = static_cast<int>(view.net.branches.size());
        view.eob.bounds = bounds[a];
        view.net.branches.push_back(eob);
        view.orig_branch.push_back(-1);

        for (const auto& s : net.transformer_slots) {
            if (area_of[s.node] != a) continue;
            TransformerSlot slot = s;
            auto it = orig_to_view.find(s.outlet_branch);
            if (it == orig_to_view.end())
                throw PartitionError("transformer slot " + s.id + " outlet branch leaves its sub-area");
            slot.outlet_branch = it->second;
            view.net.transformer_slots.push_back(slot);
        }
        // The EDS feeder enters through the EOB; internal feeders carry over.
        Feeder feed;
        feed.id = "feed" + std::to_string(a);
        feed.head_branch = view.eob.eob_branch;
        view.net.feeders.push_back(feed);
        for (const auto& f : net.feeders) {
            const Branch& hb = net.branches[f.head_branch];
            int af = area_of[hb.from], at = area_of[hb.to];
            if (af == a && at == a) {
                Feeder fd = f;
                fd.head_branch = orig_to_view.at(f.head_branch);
                view.net.feeders.push_back(fd);
            }
        }

        view.net.catalog = net.catalog;
        view.net.horizon = net.horizon;
        view.net.horizon.saidi_limit.clear();
        if (auto it = net.horizon.saidi_limit.find(view.area_key); it != net.horizon.saidi_limit.end())
            view.net.horizon.saidi_limit[view.area_key] = it->second;

        part.sub_areas.push_back(std::move(view));
    }

    return part;
}

PartitionedNetwork partition_network(const Network& net) {
    return partition_network(net, net.partition);
}

}  // namespace gridplan
