#include "gridplan/reliability.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace gridplan {

namespace {

struct PlanEquipment {
    std::vector<double> capacity;  // per branch, 0 when bare
    std::vector<double> r, x, lambda;
    std::vector<char> built;
    std::vector<char> source_alive;       // per node
    std::vector<double> slot_capacity;    // per slot, 0 when empty
};

PlanEquipment equipment_at(const Network& net, const Plan& plan, int stage) {
    PlanEquipment eq;
    const int B = static_cast<int>(net.branches.size());
    eq.capacity.assign(B, 0.0);
    eq.r.assign(B, 0.0);
    eq.x.assign(B, 0.0);
    eq.lambda.assign(B, 0.0);
    eq.built.assign(B, 0);
    for (int b = 0; b < B; ++b) {
        auto type = alive_conductor(net, plan, b, stage);
        if (!type) continue;
        const ConductorType* ct = net.catalog.find_conductor(*type);
        eq.built[b] = 1;
        eq.capacity[b] = ct->capacity_mva;
        eq.r[b] = ct->resistance_per_km * net.branches[b].length_km;
        eq.x[b] = ct->reactance_per_km * net.branches[b].length_km;
        eq.lambda[b] = ct->failure_rate_per_km * net.branches[b].length_km;
    }
    eq.source_alive.assign(net.nodes.size(), 0);
    for (size_t n = 0; n < net.nodes.size(); ++n)
        if (net.nodes[n].source_candidate() &&
            substation_exists(net, plan, net.nodes[n].id, stage))
            eq.source_alive[n] = 1;
    eq.slot_capacity.assign(net.transformer_slots.size(), 0.0);
    for (size_t s = 0; s < net.transformer_slots.size(); ++s) {
        auto type = alive_transformer(net, plan, net.transformer_slots[s].id, stage);
        if (!type) continue;
        eq.slot_capacity[s] = net.catalog.find_transformer(*type)->capacity_mva;
    }
    return eq;
}

}  // namespace

std::map<std::string, std::string> feeder_labels(const Network& net,
                                                 const std::vector<int>& closed,
                                                 int stage_for_equipment, const Plan& plan) {
    (void)stage_for_equipment;
    (void)plan;
    std::map<std::string, std::string> label;
    const int N = static_cast<int>(net.nodes.size());
    const int B = static_cast<int>(net.branches.size());
    std::vector<char> is_closed(B, 0);
    for (int b : closed) is_closed[b] = 1;
    std::vector<int> from(B), to(B);
    for (int b = 0; b < B; ++b) {
        from[b] = net.node_index(net.branches[b].from);
        to[b] = net.node_index(net.branches[b].to);
    }
    std::vector<char> is_source(N, 0);
    for (int n = 0; n < N; ++n) is_source[n] = net.nodes[n].source_candidate() ? 1 : 0;

    for (const Feeder& f : net.feeders) {
        if (!is_closed[f.head_branch]) continue;
        std::vector<int> stack;
        auto claim = [&](int node) {
            const std::string& id = net.nodes[node].id;
            if (is_source[node] || label.count(id)) return;
            label[id] = f.id;
            stack.push_back(node);
        };
        claim(from[f.head_branch]);
        claim(to[f.head_branch]);
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            for (int b = 0; b < B; ++b) {
                if (!is_closed[b] || b == f.head_branch) continue;
                if (from[b] == u) claim(to[b]);
                if (to[b] == u) claim(from[b]);
            }
        }
    }
    return label;
}

FaultOutcome simulate_fault(const Network& net, const Plan& plan, int stage, int fault_branch,
                            const SolverConfig& solver) {
    const int N = static_cast<int>(net.nodes.size());
    const int B = static_cast<int>(net.branches.size());
    PlanEquipment eq = equipment_at(net, plan, stage);
    if (!eq.built[fault_branch]) throw Error("fault on a branch that is not built in the plan");

    const std::vector<int>& closed = plan.normal_closed[stage - 1];
    // Pre-check: the plan's normal topology must be a forest feeding all load.
    {
        std::vector<int> parent(N);
        std::iota(parent.begin(), parent.end(), 0);
        std::function<int(int)> find = [&](int v) {
            while (parent[v] != v) v = parent[v] = parent[parent[v]];
            return v;
        };
        for (int b : closed) {
            int u = find(net.node_index(net.branches[b].from));
            int v = find(net.node_index(net.branches[b].to));
            if (u == v) throw Error("plan normal topology contains a cycle");
            parent[u] = v;
        }
        for (int n = 0; n < N; ++n) {
            if (net.nodes[n].load_p[stage - 1] <= 0.0) continue;
            bool fed = false;
            for (int m = 0; m < N; ++m)
                if (eq.source_alive[m] && find(n) == find(m)) fed = true;
            if (!fed) throw Error("plan normal topology strands load at " + net.nodes[n].id);
        }
    }

    FaultOutcome out;
    out.branch = fault_branch;
    out.affected.assign(N, 0);
    out.outage.assign(N, 0);

    // Affected set: every node sharing the faulted branch's feeder.
    std::map<std::string, std::string> label = feeder_labels(net, closed, stage, plan);
    std::string fault_label;
    {
        // The faulted branch's feeder is the label of either endpoint reached
        // through the normal topology (heads label their own branch).
        bool in_normal = std::find(closed.begin(), closed.end(), fault_branch) != closed.end();
        if (in_normal) {
            for (const Feeder& f : net.feeders)
                if (f.head_branch == fault_branch) fault_label = f.id;
            if (fault_label.empty()) {
                for (const std::string& end :
                     {net.branches[fault_branch].from, net.branches[fault_branch].to}) {
                    auto it = label.find(end);
                    if (it != label.end()) fault_label = it->second;
                }
            }
        }
    }
    if (fault_label.empty()) return out;  // fault on an open tie interrupts nobody

    for (int n = 0; n < N; ++n) {
        auto it = label.find(net.nodes[n].id);
        if (it != label.end() && it->second == fault_label) out.affected[n] = 1;
    }

    // Restoration: maximize restored load, ties to fewer closed switches,
    // over the built branches with the fault isolated.
    MilpModel m;
    m.module_tag = "restore";
    std::vector<int> sw(B, -1), qv(N, -1), fp(B, -1), fq(B, -1), uv(N, -1);
    std::vector<int> from(B), to(B);
    for (int b = 0; b < B; ++b) {
        from[b] = net.node_index(net.branches[b].from);
        to[b] = net.node_index(net.branches[b].to);
    }
    double total_p = std::max(1.0, net.total_load_p(stage));
    double total_q = std::max(1.0, net.total_load_q(stage));
    for (int b = 0; b < B; ++b) {
        if (!eq.built[b] || b == fault_branch) continue;
        sw[b] = m.add_binary("sw_" + std::to_string(b));
        double cap = std::min(big_m_flow(eq.capacity[b]), std::max(total_p, total_q));
        fp[b] = m.add_var("fp_" + std::to_string(b), -cap, cap, VarType::Continuous);
        fq[b] = m.add_var("fq_" + std::to_string(b), -cap, cap, VarType::Continuous);
    }
    for (int n = 0; n < N; ++n) {
        uv[n] = m.add_var("u_" + std::to_string(n), kVoltMinSq, kVoltMaxSq, VarType::Continuous);
        if (!net.nodes[n].source_candidate()) {
            if (out.affected[n])
                qv[n] = m.add_binary("q_" + std::to_string(n));
            // Unaffected nodes keep supply; their outage stays zero.
        }
    }
    std::vector<int> inj_p(N, -1), inj_q(N, -1);
    for (int n = 0; n < N; ++n) {
        if (!eq.source_alive[n]) continue;
        inj_p[n] = m.add_var("gp_" + std::to_string(n), 0.0, total_p, VarType::Continuous);
        inj_q[n] = m.add_var("gq_" + std::to_string(n), 0.0, total_q, VarType::Continuous);
    }

    auto add_row = [&](const std::string& name, std::vector<int> idx, std::vector<double> coef,
                       RowSense sense, double rhs) {
        MilpRow row;
        row.name = name;
        for (size_t k = 0; k < idx.size(); ++k)
            if (idx[k] >= 0 && coef[k] != 0.0) {
                row.idx.push_back(idx[k]);
                row.coef.push_back(coef[k]);
            }
        row.sense = sense;
        row.rhs = rhs;
        if (!row.idx.empty()) m.add_row(std::move(row));
    };

    // Power balance.
    for (int n = 0; n < N; ++n) {
        std::vector<int> idx;
        std::vector<double> coef;
        for (int b = 0; b < B; ++b) {
            if (fp[b] < 0) continue;
            if (to[b] == n) {
                idx.push_back(fp[b]);
                coef.push_back(1.0);
            } else if (from[b] == n) {
                idx.push_back(fp[b]);
                coef.push_back(-1.0);
            }
        }
        if (inj_p[n] >= 0) {
            idx.push_back(inj_p[n]);
            coef.push_back(1.0);
        }
        double lp = net.nodes[n].load_p[stage - 1];
        if (qv[n] >= 0 && lp != 0.0) {
            idx.push_back(qv[n]);
            coef.push_back(lp);
        }
        double rhs = net.nodes[n].source_candidate() ? 0.0 : lp;
        if (net.nodes[n].source_candidate()) rhs = 0.0;
        add_row("balP_" + std::to_string(n), idx, coef, RowSense::EQ, rhs);

        std::vector<int> idxq;
        std::vector<double> coefq;
        for (int b = 0; b < B; ++b) {
            if (fq[b] < 0) continue;
            if (to[b] == n) {
                idxq.push_back(fq[b]);
                coefq.push_back(1.0);
            } else if (from[b] == n) {
                idxq.push_back(fq[b]);
                coefq.push_back(-1.0);
            }
        }
        if (inj_q[n] >= 0) {
            idxq.push_back(inj_q[n]);
            coefq.push_back(1.0);
        }
        double lq = net.nodes[n].load_q[stage - 1];
        if (qv[n] >= 0 && lq != 0.0) {
            idxq.push_back(qv[n]);
            coefq.push_back(lq);
        }
        add_row("balQ_" + std::to_string(n), idxq, coefq, RowSense::EQ,
                net.nodes[n].source_candidate() ? 0.0 : lq);
    }

    // Branch rows: switch gating, capacity, apparent power, voltage drop.
    const double rt2 = std::sqrt(2.0);
    for (int b = 0; b < B; ++b) {
        if (sw[b] < 0) continue;
        double cap = eq.capacity[b];
        double mflow = std::min(big_m_flow(cap), std::max(total_p, total_q));
        add_row("fswP+", {fp[b], sw[b]}, {1.0, -mflow}, RowSense::LE, 0.0);
        add_row("fswP-", {fp[b], sw[b]}, {-1.0, -mflow}, RowSense::LE, 0.0);
        add_row("fswQ+", {fq[b], sw[b]}, {1.0, -mflow}, RowSense::LE, 0.0);
        add_row("fswQ-", {fq[b], sw[b]}, {-1.0, -mflow}, RowSense::LE, 0.0);
        add_row("capP+", {fp[b]}, {1.0}, RowSense::LE, cap);
        add_row("capP-", {fp[b]}, {-1.0}, RowSense::LE, cap);
        add_row("capQ+", {fq[b]}, {1.0}, RowSense::LE, cap);
        add_row("capQ-", {fq[b]}, {-1.0}, RowSense::LE, cap);
        for (int sp : {+1, -1})
            for (int sq : {+1, -1})
                add_row("app", {fp[b], fq[b]}, {static_cast<double>(sp), static_cast<double>(sq)},
                        RowSense::LE, rt2 * cap);
        double mv = big_m_voltage(kVoltMinSq, kVoltMaxSq,
                                  net.catalog.max_conductor_rx_per_km(),
                                  net.branches[b].length_km, net.catalog.max_conductor_capacity());
        add_row("voltHi", {uv[to[b]], uv[from[b]], fp[b], fq[b], sw[b]},
                {1.0, -1.0, 2.0 * eq.r[b], 2.0 * eq.x[b], mv}, RowSense::LE, mv);
        add_row("voltLo", {uv[to[b]], uv[from[b]], fp[b], fq[b], sw[b]},
                {1.0, -1.0, 2.0 * eq.r[b], 2.0 * eq.x[b], -mv}, RowSense::GE, -mv);
    }

    // Transformer limits on designated outlets.
    for (size_t s = 0; s < net.transformer_slots.size(); ++s) {
        int b = net.transformer_slots[s].outlet_branch;
        if (fp[b] < 0) continue;
        double sg = net.branches[b].from == net.transformer_slots[s].node ? 1.0 : -1.0;
        double cap = eq.slot_capacity[s];
        add_row("trP", {fp[b]}, {sg}, RowSense::LE, cap);
        add_row("trQ", {fq[b]}, {sg}, RowSense::LE, cap);
        for (int sp : {+1, -1})
            for (int sq : {+1, -1})
                add_row("trApp", {fp[b], fq[b]}, {sp * sg, sq * sg}, RowSense::LE, rt2 * cap);
    }

    // Radial restoration count and outage logic.
    {
        std::vector<int> idx;
        std::vector<double> coef;
        int count = 0;
        for (int b = 0; b < B; ++b)
            if (sw[b] >= 0) {
                idx.push_back(sw[b]);
                coef.push_back(1.0);
            }
        for (int n = 0; n < N; ++n) {
            if (net.nodes[n].source_candidate()) continue;
            ++count;
            if (qv[n] >= 0) {
                idx.push_back(qv[n]);
                coef.push_back(1.0);
            }
        }
        add_row("radial", idx, coef, RowSense::EQ, count);
    }
    // A restored node keeps a closed incident branch.
    for (int n = 0; n < N; ++n) {
        if (net.nodes[n].source_candidate()) continue;
        std::vector<int> idx;
        std::vector<double> coef;
        for (int b = 0; b < B; ++b) {
            if (sw[b] < 0) continue;
            if (from[b] == n || to[b] == n) {
                idx.push_back(sw[b]);
                coef.push_back(1.0);
            }
        }
        if (qv[n] >= 0) {
            idx.push_back(qv[n]);
            coef.push_back(1.0);
            add_row("degree_" + std::to_string(n), idx, coef, RowSense::GE, 1.0);
        } else {
            add_row("degree_" + std::to_string(n), idx, coef, RowSense::GE, 1.0);
        }
    }

    // Maximize restored load; ties prefer fewer closed switches.
    for (int n = 0; n < N; ++n)
        if (qv[n] >= 0) m.set_objective(qv[n], net.nodes[n].load_p[stage - 1]);
    for (int b = 0; b < B; ++b)
        if (sw[b] >= 0) m.set_objective(sw[b], 1e-5 * (1 + b % 7));

    MilpSolution sol = solve_milp(m, solver);
    if (sol.status != SolveStatus::Optimal)
        throw Error("restoration model unexpectedly " + to_string(sol.status) + " for fault on branch " +
                    std::to_string(fault_branch));

    for (int n = 0; n < N; ++n)
        if (qv[n] >= 0 && sol.values(qv[n]) > 0.5) out.outage[n] = 1;
    for (int b = 0; b < B; ++b)
        if (sw[b] >= 0 && sol.values(sw[b]) > 0.5) out.restoration_closed.push_back(b);
    return out;
}

ReliabilityReport evaluate_plan_reliability(const Network& net, const Plan& plan,
                                            const SolverConfig& solver) {
    const int N = static_cast<int>(net.nodes.size());
    ReliabilityReport rep;
    rep.network_hash = plan.network_hash.empty() ? network_hash(net) : plan.network_hash;
    std::vector<int> tracked;
    for (int n = 0; n < N; ++n) {
        if (net.nodes[n].source_candidate()) continue;
        tracked.push_back(n);
        rep.node_ids.push_back(net.nodes[n].id);
    }
    rep.cif.setZero(tracked.size(), plan.stages);
    rep.cid.setZero(tracked.size(), plan.stages);
    rep.detail.resize(plan.stages);

    for (int t = 1; t <= plan.stages; ++t) {
        PlanEquipment eq = equipment_at(net, plan, t);
        for (int b = 0; b < static_cast<int>(net.branches.size()); ++b) {
            if (!eq.built[b]) continue;
            FaultOutcome fo = simulate_fault(net, plan, t, b, solver);
            double lam = eq.lambda[b];
            double tsw = net.branches[b].switch_time_h;
            double trp = net.branches[b].repair_time_h;
            for (size_t k = 0; k < tracked.size(); ++k) {
                int n = tracked[k];
                if (fo.affected[n]) {
                    rep.cif(k, t - 1) += lam;
                    rep.cid(k, t - 1) += lam * tsw;
                }
                if (fo.outage[n]) rep.cid(k, t - 1) += lam * (trp - tsw);
            }
            rep.detail[t - 1].push_back(std::move(fo));
        }
    }

    std::map<std::string, std::vector<int>> area_nodes;
    for (const auto& [key, lim] : net.horizon.saidi_limit) {
        (void)lim;
        std::vector<int> nodes;
        if (key == "backbone") {
            if (net.partition.backbone.empty())
                for (int n : tracked) nodes.push_back(n);
            else
                for (const auto& id : net.partition.backbone) nodes.push_back(net.node_index(id));
        } else {
            int a = std::atoi(key.c_str() + 1);
            if (a < 0 || a >= static_cast<int>(net.partition.sub_areas.size()))
                throw Error("SAIDI limit references unknown area " + key);
            for (const auto& id : net.partition.sub_areas[a].nodes)
                nodes.push_back(net.node_index(id));
        }
        area_nodes[key] = nodes;
    }
    for (const auto& [key, nodes] : area_nodes) {
        Vector v(plan.stages);
        for (int t = 1; t <= plan.stages; ++t) {
            double total = 0.0, acc = 0.0;
            for (int n : nodes) {
                total += static_cast<double>(net.nodes[n].customers);
                auto it = std::find(tracked.begin(), tracked.end(), n);
                if (it == tracked.end()) continue;
                acc += static_cast<double>(net.nodes[n].customers) *
                       rep.cid(std::distance(tracked.begin(), it), t - 1);
            }
            v(t - 1) = total > 0 ? acc / total : 0.0;
        }
        rep.saidi[key] = v;
    }

    // Internal consistency of the report itself.
    for (size_t k = 0; k < tracked.size(); ++k)
        for (int t = 0; t < plan.stages; ++t)
            if (rep.cid(k, t) + 1e-12 < rep.cif(k, t) * 0.0)
                throw ConsistencyError("negative interruption duration");
    return rep;
}

double ReliabilityReport::cif_of(const std::string& node_id, int stage) const {
    for (size_t k = 0; k < node_ids.size(); ++k)
        if (node_ids[k] == node_id) return cif(k, stage - 1);
    throw Error("unknown node in reliability report: " + node_id);
}

double ReliabilityReport::cid_of(const std::string& node_id, int stage) const {
    for (size_t k = 0; k < node_ids.size(); ++k)
        if (node_ids[k] == node_id) return cid(k, stage - 1);
    throw Error("unknown node in reliability report: " + node_id);
}

std::string ReliabilityReport::to_json() const {
    nlohmann::json j;
    j["networkHash"] = network_hash;
    for (size_t k = 0; k < node_ids.size(); ++k) {
        nlohmann::json e;
        for (int t = 0; t < cif.cols(); ++t) {
            e["cif"].push_back(cif(k, t));
            e["cid"].push_back(cid(k, t));
        }
        j["nodes"][node_ids[k]] = e;
    }
    for (const auto& [area, v] : saidi) {
        for (int t = 0; t < v.size(); ++t) j["saidi"][area].push_back(v(t));
    }
    for (size_t t = 0; t < detail.size(); ++t) {
        nlohmann::json stage_rows = nlohmann::json::array();
        for (const FaultOutcome& fo : detail[t]) {
            nlohmann::json e;
            e["branch"] = fo.branch;
            for (size_t n = 0; n < fo.affected.size(); ++n) {
                if (fo.affected[n]) e["affected"].push_back(static_cast<int>(n));
                if (fo.outage[n]) e["outage"].push_back(static_cast<int>(n));
            }
            e["restorationClosed"] = fo.restoration_closed;
            stage_rows.push_back(e);
        }
        j["faults"]["stage" + std::to_string(t + 1)] = stage_rows;
    }
    return j.dump(2) + "\n";
}

std::string ReliabilityReport::to_csv() const {
    std::ostringstream os;
    os << "node,stage,cif,cid\n";
    for (size_t k = 0; k < node_ids.size(); ++k)
        for (int t = 0; t < cif.cols(); ++t)
            os << node_ids[k] << "," << t + 1 << "," << cif(k, t) << "," << cid(k, t) << "\n";
    return os.str();
}

RequirementsResult check_requirements(const ReliabilityReport& report,
                                      const PlanningHorizon& horizon) {
    RequirementsResult res;
    res.pass = true;
    for (const auto& [area, limit] : horizon.saidi_limit) {
        auto it = report.saidi.find(area);
        double worst = 0.0;
        if (it != report.saidi.end() && it->second.size() > 0) worst = it->second.maxCoeff();
        double margin = limit - worst;
        res.margin[area] = margin;
        if (worst > limit + 1e-6) res.pass = false;
    }
    return res;
}

}  // namespace gridplan
