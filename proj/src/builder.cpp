#include "gridplan/builder.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace gridplan {

double big_m_flow(double max_capacity_mva) { return std::sqrt(2.0) * max_capacity_mva; }

double big_m_voltage(double u_min_sq, double u_max_sq, double max_rx_per_km,
                     double length_km, double max_capacity_mva) {
    return (u_max_sq - u_min_sq) +
           2.0 * max_rx_per_km * length_km * std::sqrt(2.0) * max_capacity_mva;
}

double big_m_product(double bound_a, double bound_b) { return bound_a * bound_b; }

// ---------------------------------------------------------------------------
// Atlas accessors
// ---------------------------------------------------------------------------

namespace {
inline int at(const std::vector<int>& v, size_t i) { return i < v.size() ? v[i] : -1; }
}  // namespace

int VariableAtlas::l_var(int b, int a, int t) const {
    return at(l, (static_cast<size_t>(b) * n_ctypes + a) * stages + (t - 1));
}
int VariableAtlas::mtr_var(int s, int a, int t) const {
    return at(mtr, (static_cast<size_t>(s) * n_ttypes + a) * stages + (t - 1));
}
int VariableAtlas::ns_var(int n, int t) const {
    return at(ns, static_cast<size_t>(n) * stages + (t - 1));
}
int VariableAtlas::flow_p_var(int b, int sc, int t) const {
    return at(flow_p, (static_cast<size_t>(b) * scenarios.count() + sc) * stages + (t - 1));
}
int VariableAtlas::flow_q_var(int b, int sc, int t) const {
    return at(flow_q, (static_cast<size_t>(b) * scenarios.count() + sc) * stages + (t - 1));
}
int VariableAtlas::volt_var(int n, int sc, int t) const {
    return at(volt, (static_cast<size_t>(n) * scenarios.count() + sc) * stages + (t - 1));
}
int VariableAtlas::sw_var(int b, int sc, int t) const {
    return at(sw, (static_cast<size_t>(b) * scenarios.count() + sc) * stages + (t - 1));
}
int VariableAtlas::inj_p_var(int n, int sc, int t) const {
    return at(inj_p, (static_cast<size_t>(n) * scenarios.count() + sc) * stages + (t - 1));
}
int VariableAtlas::inj_q_var(int n, int sc, int t) const {
    return at(inj_q, (static_cast<size_t>(n) * scenarios.count() + sc) * stages + (t - 1));
}
int VariableAtlas::u_ss_var(int n, int t) const {
    return at(u_ss, static_cast<size_t>(n) * stages + (t - 1));
}
int VariableAtlas::p_var(int n, int f, int t) const {
    return at(p_aff, (static_cast<size_t>(n) * n_branches + f) * stages + (t - 1));
}
int VariableAtlas::q_var(int n, int f, int t) const {
    return at(q_out, (static_cast<size_t>(n) * n_branches + f) * stages + (t - 1));
}
int VariableAtlas::aux_lam_p_var(int n, int f, int t) const {
    return at(aux_lam_p, (static_cast<size_t>(n) * n_branches + f) * stages + (t - 1));
}
int VariableAtlas::aux_lam_q_var(int n, int f, int t) const {
    return at(aux_lam_q, (static_cast<size_t>(n) * n_branches + f) * stages + (t - 1));
}
int VariableAtlas::aux_u_var(int n, int t) const {
    return at(aux_u, static_cast<size_t>(n) * stages + (t - 1));
}
int VariableAtlas::h_node_var(int n, int f, int t) const {
    return at(h_node, (static_cast<size_t>(n) * n_feeders + f) * stages + (t - 1));
}
int VariableAtlas::h_branch_var(int b, int f, int t) const {
    return at(h_branch, (static_cast<size_t>(b) * n_feeders + f) * stages + (t - 1));
}
int VariableAtlas::cif_var(int n, int t) const {
    return at(cif, static_cast<size_t>(n) * stages + (t - 1));
}
int VariableAtlas::cid_var(int n, int t) const {
    return at(cid, static_cast<size_t>(n) * stages + (t - 1));
}
int VariableAtlas::saidi_var(int a, int t) const {
    return at(saidi, static_cast<size_t>(a) * stages + (t - 1));
}
int VariableAtlas::eens_var(int t) const { return at(eens, t - 1); }
int VariableAtlas::pd_var(int e, int t) const {
    return at(pd, static_cast<size_t>(e) * stages + (t - 1));
}
int VariableAtlas::qd_var(int e, int t) const {
    return at(qd, static_cast<size_t>(e) * stages + (t - 1));
}
int VariableAtlas::s_bd_var(int e, int t) const {
    return at(s_bd, static_cast<size_t>(e) * stages + (t - 1));
}
int VariableAtlas::aux_pd_var(int e, int f, int t) const {
    return at(aux_pd, (static_cast<size_t>(e) * n_branches + f) * stages + (t - 1));
}
int VariableAtlas::aux_qd_var(int e, int f, int t) const {
    return at(aux_qd, (static_cast<size_t>(e) * n_branches + f) * stages + (t - 1));
}

// ---------------------------------------------------------------------------
// Build context and linear-expression plumbing
// ---------------------------------------------------------------------------

namespace {

struct LinExpr {
    std::vector<int> idx;
    std::vector<double> coef;
    double constant = 0.0;

    void add(int var, double c) {
        if (c == 0.0) return;
        idx.push_back(var);
        coef.push_back(c);
    }
    void add(const LinExpr& e, double scale = 1.0) {
        for (size_t k = 0; k < e.idx.size(); ++k) add(e.idx[k], scale * e.coef[k]);
        constant += scale * e.constant;
    }
    bool has_vars() const { return !idx.empty(); }
};

struct Ctx {
    const Network* net = nullptr;
    ViewKind kind = ViewKind::Centralized;
    const BackboneView* bb = nullptr;
    const SubAreaView* sa = nullptr;
    BuildOptions opts;

    MilpModel model;
    VariableAtlas atlas;

    int T = 0;
    PresentValueFactors pv;
    std::vector<int> eln_of_node;  // node -> eln index or -1
    double max_s = 0.0;            // catalog capacity bound
    std::vector<double> total_p, total_q;  // per stage incl. ELN boxes

    void add_row(const std::string& name, const LinExpr& e, RowSense sense, double rhs) {
        MilpRow row;
        row.name = name;
        // merge duplicate columns for clean presolve arithmetic
        std::map<int, double> merged;
        for (size_t k = 0; k < e.idx.size(); ++k) merged[e.idx[k]] += e.coef[k];
        for (const auto& [j, c] : merged) {
            if (c == 0.0) continue;
            row.idx.push_back(j);
            row.coef.push_back(c);
        }
        row.sense = sense;
        row.rhs = rhs - e.constant;
        if (row.idx.empty()) {
            bool ok = true;
            switch (sense) {
                case RowSense::LE: ok = 0.0 <= row.rhs + 1e-9; break;
                case RowSense::GE: ok = 0.0 >= row.rhs - 1e-9; break;
                case RowSense::EQ: ok = std::abs(row.rhs) <= 1e-9; break;
            }
            if (!ok) throw BuildError("constant row " + name + " is infeasible at build time");
            return;
        }
        model.add_row(std::move(row));
    }

    // alive indicator of conductor type a on branch b at stage t
    LinExpr alive_c(int b, int a, int t) const {
        LinExpr e;
        const ConductorType& ct = net->catalog.conductors[a];
        for (int tau = std::max(1, t - ct.lifespan_stages + 1); tau <= t; ++tau)
            e.add(atlas.l_var(b, a, tau), 1.0);
        if (net->branches[b].existing_conductor == ct.id && t <= ct.remaining_lifespan_stages)
            e.constant += 1.0;
        return e;
    }
    LinExpr alive_tr(int s, int a, int t) const {
        LinExpr e;
        const TransformerType& tt = net->catalog.transformers[a];
        for (int tau = std::max(1, t - tt.lifespan_stages + 1); tau <= t; ++tau)
            e.add(atlas.mtr_var(s, a, tau), 1.0);
        return e;
    }
    // substation existence at stage t
    LinExpr exists_ss(int n, int t) const {
        LinExpr e;
        if (net->nodes[n].substation.existing) {
            e.constant = 1.0;
            return e;
        }
        for (int tau = 1; tau <= t; ++tau) e.add(atlas.ns_var(n, tau), 1.0);
        return e;
    }
    bool is_eob(int b) const { return kind == ViewKind::SubArea && b == atlas.eob_branch; }
    LinExpr capacity_expr(int b, int t) const {
        LinExpr e;
        if (is_eob(b)) {
            e.add(atlas.s_eob_v[t - 1], 1.0);
            return e;
        }
        for (int a = 0; a < atlas.n_ctypes; ++a)
            e.add(alive_c(b, a, t), net->catalog.conductors[a].capacity_mva);
        return e;
    }
    LinExpr lambda_expr(int b, int t) const {
        LinExpr e;
        if (is_eob(b)) {
            e.add(atlas.lam_eob_v[t - 1], 1.0);
            return e;
        }
        for (int a = 0; a < atlas.n_ctypes; ++a)
            e.add(alive_c(b, a, t),
                  net->catalog.conductors[a].failure_rate_per_km * net->branches[b].length_km);
        return e;
    }
    LinExpr built_expr(int b, int t) const {
        LinExpr e;
        if (is_eob(b)) {
            e.constant = 1.0;
            return e;
        }
        for (int a = 0; a < atlas.n_ctypes; ++a) e.add(alive_c(b, a, t), 1.0);
        return e;
    }
    double lambda_bound(int b) const {
        if (is_eob(b)) return sa->eob.bounds.cif_max;
        return net->catalog.max_conductor_failure_rate_per_km() * net->branches[b].length_km;
    }
    double flow_bound(int b) const {
        // Radial operation makes every branch flow a partial sum of loads, so
        // the family M of the switch-linked rows tightens against the system
        // total; the capacity-family M keeps the sqrt(2)*S form.
        double cap = is_eob(b) ? big_m_flow(sa->eob.bounds.s_max) : big_m_flow(max_s);
        double load = 0.0;
        for (int t = 0; t < T; ++t) load = std::max(load, std::max(total_p[t], total_q[t]));
        return std::min(cap, load);
    }
};

std::string vn(const std::string& base, std::initializer_list<int> parts) {
    std::string s = base;
    for (int p : parts) s += "_" + std::to_string(p);
    return s;
}

void create_variables(Ctx& ctx) {
    const Network& net = *ctx.net;
    VariableAtlas& A = ctx.atlas;
    MilpModel& M = ctx.model;
    const int T = ctx.T;
    const int N = A.n_nodes, B = A.n_branches, F = A.n_feeders;
    const int S = A.scenarios.count();
    const double inf = std::numeric_limits<double>::infinity();
    (void)inf;

    double lam_sum = 0.0, tau_rp_max = 0.0;
    for (int b = 0; b < B; ++b) {
        lam_sum += ctx.lambda_bound(b);
        tau_rp_max = std::max(tau_rp_max, net.branches[b].repair_time_h);
    }
    const double cif_cap = lam_sum;
    const double cid_cap = lam_sum * tau_rp_max;

    // Investment binaries.
    A.l.assign(static_cast<size_t>(B) * A.n_ctypes * T, -1);
    for (int b = 0; b < B; ++b) {
        if (ctx.is_eob(b)) continue;
        for (int a = 0; a < A.n_ctypes; ++a)
            for (int t = 1; t <= T; ++t)
                A.l[(static_cast<size_t>(b) * A.n_ctypes + a) * T + t - 1] =
                    M.add_binary(vn("l", {b, a, t}));
    }
    A.mtr.assign(static_cast<size_t>(A.n_slots) * A.n_ttypes * T, -1);
    for (int s = 0; s < A.n_slots; ++s)
        for (int a = 0; a < A.n_ttypes; ++a)
            for (int t = 1; t <= T; ++t)
                A.mtr[(static_cast<size_t>(s) * A.n_ttypes + a) * T + t - 1] =
                    M.add_binary(vn("m", {s, a, t}));
    A.ns.assign(static_cast<size_t>(N) * T, -1);
    for (int n = 0; n < N; ++n) {
        const auto& sub = net.nodes[n].substation;
        if (!sub.candidate) continue;
        for (int t = 1; t <= T; ++t) {
            int v = M.add_binary(vn("ns", {n, t}));
            if (sub.existing) M.vars[v].ub = 0.0;  // already built
            A.ns[static_cast<size_t>(n) * T + t - 1] = v;
        }
    }

    // Boundary variables.
    if (ctx.kind == ViewKind::Backbone) {
        const int E = static_cast<int>(ctx.bb->elns.size());
        A.pd.assign(static_cast<size_t>(E) * T, -1);
        A.qd.assign(static_cast<size_t>(E) * T, -1);
        A.s_bd.assign(static_cast<size_t>(E) * T, -1);
        for (int e = 0; e < E; ++e) {
            const BoundaryBounds& bd = ctx.bb->elns[e].bounds;
            for (int t = 1; t <= T; ++t) {
                A.pd[static_cast<size_t>(e) * T + t - 1] =
                    M.add_var(vn("pd", {e, t}), 0.0, bd.p_max, VarType::Continuous);
                A.qd[static_cast<size_t>(e) * T + t - 1] =
                    M.add_var(vn("qd", {e, t}), 0.0, bd.q_max, VarType::Continuous);
                A.s_bd[static_cast<size_t>(e) * T + t - 1] =
                    M.add_var(vn("sbd", {e, t}), 0.0, bd.s_max, VarType::Continuous);
            }
        }
    }
    if (ctx.kind == ViewKind::SubArea) {
        const BoundaryBounds& bd = ctx.sa->eob.bounds;
        A.lam_eob_v.assign(T, -1);
        A.u_eob_v.assign(T, -1);
        A.s_eob_v.assign(T, -1);
        for (int t = 1; t <= T; ++t) {
            A.lam_eob_v[t - 1] = M.add_var(vn("lamEob", {t}), 0.0, bd.cif_max, VarType::Continuous);
            A.u_eob_v[t - 1] = M.add_var(vn("uEob", {t}), 0.0, bd.cid_max, VarType::Continuous);
            A.s_eob_v[t - 1] = M.add_var(vn("sEob", {t}), 0.0, bd.s_max, VarType::Continuous);
        }
    }

    // Substation source voltages (shared across scenarios).
    A.u_ss.assign(static_cast<size_t>(N) * T, -1);
    for (int n = 0; n < N; ++n) {
        if (!A.is_source[n]) continue;
        for (int t = 1; t <= T; ++t)
            A.u_ss[static_cast<size_t>(n) * T + t - 1] =
                M.add_var(vn("uss", {n, t}), kVoltMinSq, kVoltMaxSq, VarType::Continuous);
    }

    // Operation variables.
    A.flow_p.assign(static_cast<size_t>(B) * S * T, -1);
    A.flow_q.assign(static_cast<size_t>(B) * S * T, -1);
    A.sw.assign(static_cast<size_t>(B) * S * T, -1);
    A.volt.assign(static_cast<size_t>(N) * S * T, -1);
    A.inj_p.assign(static_cast<size_t>(N) * S * T, -1);
    A.inj_q.assign(static_cast<size_t>(N) * S * T, -1);
    for (int t = 1; t <= T; ++t) {
        for (int sc = 0; sc < S; ++sc) {
            for (int b = 0; b < B; ++b) {
                double fb = ctx.flow_bound(b);
                A.flow_p[(static_cast<size_t>(b) * S + sc) * T + t - 1] =
                    M.add_var(vn("fp", {b, sc, t}), -fb, fb, VarType::Continuous);
                A.flow_q[(static_cast<size_t>(b) * S + sc) * T + t - 1] =
                    M.add_var(vn("fq", {b, sc, t}), -fb, fb, VarType::Continuous);
                A.sw[(static_cast<size_t>(b) * S + sc) * T + t - 1] =
                    M.add_binary(vn("sw", {b, sc, t}));
            }
            for (int n = 0; n < N; ++n) {
                if (A.is_source[n]) {
                    A.volt[(static_cast<size_t>(n) * S + sc) * T + t - 1] = A.u_ss_var(n, t);
                    A.inj_p[(static_cast<size_t>(n) * S + sc) * T + t - 1] = M.add_var(
                        vn("gp", {n, sc, t}), 0.0, ctx.total_p[t - 1], VarType::Continuous);
                    A.inj_q[(static_cast<size_t>(n) * S + sc) * T + t - 1] = M.add_var(
                        vn("gq", {n, sc, t}), 0.0, ctx.total_q[t - 1], VarType::Continuous);
                } else {
                    A.volt[(static_cast<size_t>(n) * S + sc) * T + t - 1] = M.add_var(
                        vn("u", {n, sc, t}), kVoltMinSq, kVoltMaxSq, VarType::Continuous);
                }
            }
        }
    }

    // Fault indicators and failure-rate products.
    A.p_aff.assign(static_cast<size_t>(N) * B * T, -1);
    A.q_out.assign(static_cast<size_t>(N) * B * T, -1);
    A.aux_lam_p.assign(static_cast<size_t>(N) * B * T, -1);
    A.aux_lam_q.assign(static_cast<size_t>(N) * B * T, -1);
    if (ctx.kind == ViewKind::SubArea) A.aux_u.assign(static_cast<size_t>(N) * T, -1);
    for (int n = 0; n < N; ++n) {
        if (A.is_source[n]) continue;
        for (int f = 0; f < B; ++f) {
            int xy = A.scenarios.fault_branches[f];
            for (int t = 1; t <= T; ++t) {
                size_t key = (static_cast<size_t>(n) * B + f) * T + t - 1;
                A.p_aff[key] = M.add_binary(vn("p", {n, f, t}));
                A.q_out[key] = M.add_binary(vn("q", {n, f, t}));
                LinExpr lam = ctx.lambda_expr(xy, t);
                if (lam.has_vars()) {
                    double cap = ctx.lambda_bound(xy);
                    A.aux_lam_p[key] =
                        M.add_var(vn("alp", {n, f, t}), 0.0, cap, VarType::Continuous);
                    if (!ctx.is_eob(xy))
                        A.aux_lam_q[key] =
                            M.add_var(vn("alq", {n, f, t}), 0.0, cap, VarType::Continuous);
                }
                if (ctx.is_eob(xy))
                    A.aux_u[static_cast<size_t>(n) * T + t - 1] = M.add_var(
                        vn("au", {n, t}), 0.0, ctx.sa->eob.bounds.cid_max, VarType::Continuous);
            }
        }
    }

    // ELN load products under faults.
    if (ctx.kind == ViewKind::Backbone) {
        const int E = static_cast<int>(ctx.bb->elns.size());
        A.aux_pd.assign(static_cast<size_t>(E) * B * T, -1);
        A.aux_qd.assign(static_cast<size_t>(E) * B * T, -1);
        for (int e = 0; e < E; ++e) {
            const BoundaryBounds& bd = ctx.bb->elns[e].bounds;
            for (int f = 0; f < B; ++f)
                for (int t = 1; t <= T; ++t) {
                    size_t key = (static_cast<size_t>(e) * B + f) * T + t - 1;
                    A.aux_pd[key] =
                        M.add_var(vn("apd", {e, f, t}), 0.0, bd.p_max, VarType::Continuous);
                    A.aux_qd[key] =
                        M.add_var(vn("aqd", {e, f, t}), 0.0, bd.q_max, VarType::Continuous);
                }
        }
    }

    // Feeder affiliation (normal state, continuous in [0,1]).
    A.h_node.assign(static_cast<size_t>(N) * F * T, -1);
    A.h_branch.assign(static_cast<size_t>(B) * F * T, -1);
    for (int n = 0; n < N; ++n) {
        if (A.is_source[n]) continue;
        for (int f = 0; f < F; ++f)
            for (int t = 1; t <= T; ++t)
                A.h_node[(static_cast<size_t>(n) * F + f) * T + t - 1] =
                    M.add_var(vn("hn", {n, f, t}), 0.0, 1.0, VarType::Continuous);
    }
    for (int b = 0; b < B; ++b)
        for (int f = 0; f < F; ++f)
            for (int t = 1; t <= T; ++t)
                A.h_branch[(static_cast<size_t>(b) * F + f) * T + t - 1] =
                    M.add_var(vn("hb", {b, f, t}), 0.0, 1.0, VarType::Continuous);

    // Reliability indices.
    A.cif.assign(static_cast<size_t>(N) * T, -1);
    A.cid.assign(static_cast<size_t>(N) * T, -1);
    for (int n = 0; n < N; ++n) {
        if (A.is_source[n]) continue;
        double cif_ub = cif_cap, cid_ub = cid_cap;
        if (ctx.kind == ViewKind::Backbone && ctx.eln_of_node[n] >= 0) {
            const BoundaryBounds& bd = ctx.bb->elns[ctx.eln_of_node[n]].bounds;
            cif_ub = bd.cif_max;
            cid_ub = bd.cid_max;
        }
        if (ctx.kind == ViewKind::SubArea) cid_ub = cid_cap + ctx.sa->eob.bounds.cid_max;
        for (int t = 1; t <= T; ++t) {
            A.cif[static_cast<size_t>(n) * T + t - 1] =
                M.add_var(vn("cif", {n, t}), 0.0, cif_ub, VarType::Continuous);
            A.cid[static_cast<size_t>(n) * T + t - 1] =
                M.add_var(vn("cid", {n, t}), 0.0, cid_ub, VarType::Continuous);
        }
    }
    A.saidi.assign(A.area_keys.size() * T, -1);
    for (size_t a = 0; a < A.area_keys.size(); ++a) {
        double lim = net.horizon.saidi_limit.at(A.area_keys[a]);
        for (int t = 1; t <= T; ++t)
            A.saidi[a * T + t - 1] =
                M.add_var(vn("saidi", {static_cast<int>(a), t}), 0.0, lim, VarType::Continuous);
    }
    A.eens.assign(T, -1);
    double eens_cap = 0.0;
    for (int n = 0; n < N; ++n)
        for (int t = 1; t <= T; ++t)
            eens_cap = std::max(eens_cap, net.nodes[n].load_p[t - 1]);
    eens_cap = (cid_cap + 1.0) * eens_cap * N + 1.0;
    for (int t = 1; t <= T; ++t)
        A.eens[t - 1] = M.add_var(vn("eens", {t}), 0.0, eens_cap, VarType::Continuous);
}

// Branch orientation helpers.
int from_idx(const Network& net, int b) { return net.node_index(net.branches[b].from); }
int to_idx(const Network& net, int b) { return net.node_index(net.branches[b].to); }

void emit_operation_rows(Ctx& ctx) {
    const Network& net = *ctx.net;
    VariableAtlas& A = ctx.atlas;
    const int T = ctx.T, N = A.n_nodes, B = A.n_branches;
    const int S = A.scenarios.count();
    const double rx_max = net.catalog.max_conductor_rx_per_km();

    for (int t = 1; t <= T; ++t) {
        for (int sc = 0; sc < S; ++sc) {
            const int fault = sc - 1;  // -1 for NO
            const int faulted_branch = sc == 0 ? -1 : A.scenarios.fault_branches[fault];

            // Power balance per node.
            for (int n = 0; n < N; ++n) {
                LinExpr ep, eq;
                for (int b = 0; b < B; ++b) {
                    int fi = from_idx(net, b), ti = to_idx(net, b);
                    if (fi != n && ti != n) continue;
                    double sg = ti == n ? 1.0 : -1.0;
                    ep.add(A.flow_p_var(b, sc, t), sg);
                    eq.add(A.flow_q_var(b, sc, t), sg);
                }
                if (A.is_source[n]) {
                    ep.add(A.inj_p_var(n, sc, t), 1.0);
                    eq.add(A.inj_q_var(n, sc, t), 1.0);
                }
                int eln = ctx.eln_of_node.empty() ? -1 : ctx.eln_of_node[n];
                if (eln >= 0) {
                    // Served load of the equivalent load node.
                    ep.add(A.pd_var(eln, t), -1.0);
                    eq.add(A.qd_var(eln, t), -1.0);
                    if (sc > 0) {
                        ep.add(A.aux_pd_var(eln, fault, t), 1.0);
                        eq.add(A.aux_qd_var(eln, fault, t), 1.0);
                    }
                    ctx.add_row(vn("balP", {n, sc, t}), ep, RowSense::EQ, 0.0);
                    ctx.add_row(vn("balQ", {n, sc, t}), eq, RowSense::EQ, 0.0);
                    continue;
                }
                double lp = net.nodes[n].load_p[t - 1];
                double lq = net.nodes[n].load_q[t - 1];
                if (sc > 0 && !A.is_source[n]) {
                    if (lp != 0.0) ep.add(A.q_var(n, fault, t), lp);
                    if (lq != 0.0) eq.add(A.q_var(n, fault, t), lq);
                }
                ctx.add_row(vn("balP", {n, sc, t}), ep, RowSense::EQ, lp);
                ctx.add_row(vn("balQ", {n, sc, t}), eq, RowSense::EQ, lq);
            }

            // Branch rows.
            for (int b = 0; b < B; ++b) {
                int fp = A.flow_p_var(b, sc, t), fq = A.flow_q_var(b, sc, t);
                int sv = A.sw_var(b, sc, t);
                int ui = A.volt_var(from_idx(net, b), sc, t);
                int uj = A.volt_var(to_idx(net, b), sc, t);
                const double d = net.branches[b].length_km;
                const double m_flow = ctx.flow_bound(b);
                const double m_volt =
                    big_m_voltage(kVoltMinSq, kVoltMaxSq, rx_max, d, ctx.max_s);

                // Voltage drop, gated per conductor type.
                auto volt_rows = [&](double r, double x, const LinExpr& gate, double gate_cap,
                                     int a_tag) {
                    // |U_j - U_i + 2 d (r P + x Q)| <= M * (gate_cap - s - gate)
                    LinExpr lo, hi;
                    hi.add(uj, 1.0);
                    hi.add(ui, -1.0);
                    hi.add(fp, 2.0 * d * r);
                    hi.add(fq, 2.0 * d * x);
                    lo.add(hi);
                    hi.add(sv, m_volt);
                    hi.add(gate, m_volt);
                    ctx.add_row(vn("voltHi", {b, a_tag, sc, t}), hi, RowSense::LE,
                                (1.0 + gate_cap) * m_volt);
                    lo.add(sv, -m_volt);
                    lo.add(gate, -m_volt);
                    ctx.add_row(vn("voltLo", {b, a_tag, sc, t}), lo, RowSense::GE,
                                -(1.0 + gate_cap) * m_volt);
                };
                if (ctx.is_eob(b)) {
                    LinExpr unit;  // EOB is ideal: source voltage carries over the branch
                    unit.constant = 1.0;
                    volt_rows(0.0, 0.0, unit, 1.0, 0);
                } else {
                    for (int a = 0; a < A.n_ctypes; ++a) {
                        const ConductorType& cty = net.catalog.conductors[a];
                        LinExpr gate = ctx.alive_c(b, a, t);
                        volt_rows(cty.resistance_per_km, cty.reactance_per_km, gate, 1.0, a);
                    }
                }

                // Switch-linked flow bounds.
                LinExpr r1, r2, r3, r4;
                r1.add(fp, 1.0);
                r1.add(sv, -m_flow);
                ctx.add_row(vn("flowSwP", {b, sc, t}), r1, RowSense::LE, 0.0);
                r2.add(fp, -1.0);
                r2.add(sv, -m_flow);
                ctx.add_row(vn("flowSwPn", {b, sc, t}), r2, RowSense::LE, 0.0);
                r3.add(fq, 1.0);
                r3.add(sv, -m_flow);
                ctx.add_row(vn("flowSwQ", {b, sc, t}), r3, RowSense::LE, 0.0);
                r4.add(fq, -1.0);
                r4.add(sv, -m_flow);
                ctx.add_row(vn("flowSwQn", {b, sc, t}), r4, RowSense::LE, 0.0);

                // Capacity bounds against the installed conductor.
                LinExpr cap = ctx.capacity_expr(b, t);
                for (int sgn : {+1, -1}) {
                    LinExpr rp;
                    rp.add(fp, sgn);
                    rp.add(cap, -1.0);
                    ctx.add_row(vn("flowCapP", {b, sgn > 0 ? 1 : 0, sc, t}), rp, RowSense::LE, 0.0);
                    LinExpr rq;
                    rq.add(fq, sgn);
                    rq.add(cap, -1.0);
                    ctx.add_row(vn("flowCapQ", {b, sgn > 0 ? 1 : 0, sc, t}), rq, RowSense::LE, 0.0);
                }
                const double rt2 = std::sqrt(2.0);
                for (int sp : {+1, -1})
                    for (int sq : {+1, -1}) {
                        LinExpr ra;
                        ra.add(fp, sp);
                        ra.add(fq, sq);
                        ra.add(cap, -rt2);
                        ctx.add_row(vn("flowApp", {b, sp > 0 ? 1 : 0, sq > 0 ? 1 : 0, sc, t}), ra,
                                    RowSense::LE, 0.0);
                    }

                // Closing requires a built conductor.
                if (!ctx.is_eob(b)) {
                    LinExpr rb;
                    rb.add(sv, 1.0);
                    rb.add(ctx.built_expr(b, t), -1.0);
                    ctx.add_row(vn("swBuilt", {b, sc, t}), rb, RowSense::LE, 0.0);
                }
            }

            // Transformer loading via designated outlet branches.
            for (int s = 0; s < A.n_slots; ++s) {
                const TransformerSlot& slot = net.transformer_slots[s];
                int b = slot.outlet_branch;
                double sg = net.branches[b].from == slot.node ? 1.0 : -1.0;
                LinExpr scap;
                for (int a = 0; a < A.n_ttypes; ++a)
                    scap.add(ctx.alive_tr(s, a, t), net.catalog.transformers[a].capacity_mva);
                int fp = A.flow_p_var(b, sc, t), fq = A.flow_q_var(b, sc, t);
                LinExpr c1;
                c1.add(fp, sg);
                c1.add(scap, -1.0);
                ctx.add_row(vn("trCapP", {s, sc, t}), c1, RowSense::LE, 0.0);
                LinExpr c2;
                c2.add(fq, sg);
                c2.add(scap, -1.0);
                ctx.add_row(vn("trCapQ", {s, sc, t}), c2, RowSense::LE, 0.0);
                const double rt2 = std::sqrt(2.0);
                for (int sp : {+1, -1})
                    for (int sq : {+1, -1}) {
                        LinExpr ra;
                        ra.add(fp, sp * sg);
                        ra.add(fq, sq * sg);
                        ra.add(scap, -rt2);
                        ctx.add_row(vn("trApp", {s, sp > 0 ? 1 : 0, sq > 0 ? 1 : 0, sc, t}), ra,
                                    RowSense::LE, 0.0);
                    }
            }

            // Substation injection allowed only where one exists.
            for (int n = 0; n < N; ++n) {
                if (!A.is_source[n]) continue;
                if (net.nodes[n].substation.existing) continue;
                LinExpr ex = ctx.exists_ss(n, t);
                LinExpr rp;
                rp.add(A.inj_p_var(n, sc, t), 1.0);
                rp.add(ex, -ctx.total_p[t - 1]);
                ctx.add_row(vn("injCapP", {n, sc, t}), rp, RowSense::LE, 0.0);
                LinExpr rq;
                rq.add(A.inj_q_var(n, sc, t), 1.0);
                rq.add(ex, -ctx.total_q[t - 1]);
                ctx.add_row(vn("injCapQ", {n, sc, t}), rq, RowSense::LE, 0.0);
            }

            // Fault-scenario indicator machinery.
            if (sc > 0) {
                // The faulted branch is isolated.
                ctx.model.vars[A.sw_var(faulted_branch, sc, t)].ub = 0.0;

                for (int n = 0; n < N; ++n) {
                    if (A.is_source[n]) continue;
                    // Shared feeder affiliation marks the affected set.
                    for (int f = 0; f < A.n_feeders; ++f) {
                        LinExpr ra;
                        ra.add(A.h_node_var(n, f, t), 1.0);
                        ra.add(A.h_branch_var(faulted_branch, f, t), 1.0);
                        ra.add(A.p_var(n, fault, t), -1.0);
                        ctx.add_row(vn("affect", {n, f, sc, t}), ra, RowSense::LE, 1.0);
                    }
                    LinExpr rq;
                    rq.add(A.q_var(n, fault, t), 1.0);
                    rq.add(A.p_var(n, fault, t), -1.0);
                    ctx.add_row(vn("outage", {n, sc, t}), rq, RowSense::LE, 0.0);
                }

                // Radial restoration count.
                LinExpr rc;
                int n_load_nodes = 0;
                for (int b = 0; b < B; ++b) rc.add(A.sw_var(b, sc, t), 1.0);
                for (int n = 0; n < N; ++n) {
                    if (A.is_source[n]) continue;
                    rc.add(A.q_var(n, fault, t), 1.0);
                    ++n_load_nodes;
                }
                ctx.add_row(vn("radialF", {sc, t}), rc, RowSense::EQ, n_load_nodes);

                // Products of failure rate and fault indicators.
                for (int n = 0; n < N; ++n) {
                    if (A.is_source[n]) continue;
                    int ap = A.aux_lam_p_var(n, fault, t);
                    if (ap >= 0) {
                        LinExpr lam = ctx.lambda_expr(faulted_branch, t);
                        double m = ctx.lambda_bound(faulted_branch);
                        int pv = A.p_var(n, fault, t);
                        LinExpr g1;  // aux >= lam - (1-p) M
                        g1.add(ap, 1.0);
                        g1.add(lam, -1.0);
                        g1.add(pv, -m);
                        ctx.add_row(vn("prodLamP1", {n, sc, t}), g1, RowSense::GE, -m);
                        LinExpr g2;  // aux <= lam + (1-p) M
                        g2.add(ap, 1.0);
                        g2.add(lam, -1.0);
                        g2.add(pv, m);
                        ctx.add_row(vn("prodLamP2", {n, sc, t}), g2, RowSense::LE, m);
                        LinExpr g3;  // aux <= p M
                        g3.add(ap, 1.0);
                        g3.add(pv, -m);
                        ctx.add_row(vn("prodLamP3", {n, sc, t}), g3, RowSense::LE, 0.0);
                    }
                    int aq = A.aux_lam_q_var(n, fault, t);
                    if (aq >= 0) {
                        LinExpr lam = ctx.lambda_expr(faulted_branch, t);
                        double m = ctx.lambda_bound(faulted_branch);
                        int qv = A.q_var(n, fault, t);
                        LinExpr g1;
                        g1.add(aq, 1.0);
                        g1.add(lam, -1.0);
                        g1.add(qv, -m);
                        ctx.add_row(vn("prodLamQ1", {n, sc, t}), g1, RowSense::GE, -m);
                        LinExpr g2;
                        g2.add(aq, 1.0);
                        g2.add(lam, -1.0);
                        g2.add(qv, m);
                        ctx.add_row(vn("prodLamQ2", {n, sc, t}), g2, RowSense::LE, m);
                        LinExpr g3;
                        g3.add(aq, 1.0);
                        g3.add(qv, -m);
                        ctx.add_row(vn("prodLamQ3", {n, sc, t}), g3, RowSense::LE, 0.0);
                    }
                    if (ctx.is_eob(faulted_branch)) {
                        int au = A.aux_u_var(n, t);
                        double m = ctx.sa->eob.bounds.cid_max;
                        int pv = A.p_var(n, fault, t);
                        int uv = A.u_eob_v[t - 1];
                        LinExpr g1;
                        g1.add(au, 1.0);
                        g1.add(uv, -1.0);
                        g1.add(pv, -m);
                        ctx.add_row(vn("prodU1", {n, sc, t}), g1, RowSense::GE, -m);
                        LinExpr g2;
                        g2.add(au, 1.0);
                        g2.add(uv, -1.0);
                        g2.add(pv, m);
                        ctx.add_row(vn("prodU2", {n, sc, t}), g2, RowSense::LE, m);
                        LinExpr g3;
                        g3.add(au, 1.0);
                        g3.add(pv, -m);
                        ctx.add_row(vn("prodU3", {n, sc, t}), g3, RowSense::LE, 0.0);
                    }
                }

                // Served equivalent load under faults: aux ~= pd * q.
                if (ctx.kind == ViewKind::Backbone) {
                    for (size_t e = 0; e < ctx.bb->elns.size(); ++e) {
                        int eln = static_cast<int>(e);
                        int node = A.eln_node[eln];
                        int qv = A.q_var(node, fault, t);
                        struct Pair {
                            int aux, base;
                            double m;
                        };
                        Pair pairs[2] = {
                            {A.aux_pd_var(eln, fault, t), A.pd_var(eln, t),
                             ctx.bb->elns[e].bounds.p_max},
                            {A.aux_qd_var(eln, fault, t), A.qd_var(eln, t),
                             ctx.bb->elns[e].bounds.q_max}};
                        for (const Pair& pr : pairs) {
                            if (pr.m <= 0.0) {
                                ctx.model.vars[pr.aux].ub = 0.0;
                                continue;
                            }
                            LinExpr g1;
                            g1.add(pr.aux, 1.0);
                            g1.add(pr.base, -1.0);
                            g1.add(qv, -pr.m);
                            ctx.add_row(vn("prodPd1", {eln, pr.aux, sc, t}), g1, RowSense::GE,
                                        -pr.m);
                            LinExpr g2;
                            g2.add(pr.aux, 1.0);
                            g2.add(pr.base, -1.0);
                            g2.add(qv, pr.m);
                            ctx.add_row(vn("prodPd2", {eln, pr.aux, sc, t}), g2, RowSense::LE,
                                        pr.m);
                            LinExpr g3;
                            g3.add(pr.aux, 1.0);
                            g3.add(qv, -pr.m);
                            ctx.add_row(vn("prodPd3", {eln, pr.aux, sc, t}), g3, RowSense::LE, 0.0);
                        }
                    }
                }
            }
        }

        // Normal-state feeder affiliation and radiality.
        const int F = A.n_feeders;
        for (int f = 0; f < F; ++f) {
            int head = net.feeders[f].head_branch;
            LinExpr rh;
            rh.add(A.h_branch_var(head, f, t), 1.0);
            rh.add(A.sw_var(head, 0, t), -1.0);
            ctx.add_row(vn("feederHead", {f, t}), rh, RowSense::EQ, 0.0);
        }
        for (int b = 0; b < B; ++b) {
            int sv = A.sw_var(b, 0, t);
            for (int f = 0; f < F; ++f) {
                int hb = A.h_branch_var(b, f, t);
                if (b != net.feeders[f].head_branch) {
                    LinExpr rcap;
                    rcap.add(hb, 1.0);
                    rcap.add(sv, -1.0);
                    ctx.add_row(vn("feederCapBr", {b, f, t}), rcap, RowSense::LE, 0.0);
                }
                for (int end : {from_idx(net, b), to_idx(net, b)}) {
                    int hn = A.h_node_var(end, f, t);
                    if (hn < 0) continue;  // source endpoints carry no label
                    LinExpr p1;
                    p1.add(hb, 1.0);
                    p1.add(hn, -1.0);
                    p1.add(sv, 1.0);
                    ctx.add_row(vn("feederProp1", {b, f, end, t}), p1, RowSense::LE, 1.0);
                    LinExpr p2;
                    p2.add(hn, 1.0);
                    p2.add(hb, -1.0);
                    p2.add(sv, 1.0);
                    ctx.add_row(vn("feederProp2", {b, f, end, t}), p2, RowSense::LE, 1.0);
                }
            }
            if (F > 0) {
                LinExpr rs;
                for (int f = 0; f < F; ++f) rs.add(A.h_branch_var(b, f, t), 1.0);
                ctx.add_row(vn("feederCap", {b, t}), rs, RowSense::LE, 1.0);
            }
        }
        for (int n = 0; n < N; ++n) {
            if (A.is_source[n] || F == 0) continue;
            LinExpr rs;
            for (int f = 0; f < F; ++f) rs.add(A.h_node_var(n, f, t), 1.0);
            ctx.add_row(vn("feederNodeCap", {n, t}), rs, RowSense::LE, 1.0);
        }
        LinExpr rad;
        for (int b = 0; b < B; ++b) rad.add(A.sw_var(b, 0, t), 1.0);
        for (int n = 0; n < N; ++n) {
            if (A.is_source[n]) continue;
            for (int f = 0; f < F; ++f) rad.add(A.h_node_var(n, f, t), -1.0);
        }
        ctx.add_row(vn("radialNO", {t}), rad, RowSense::EQ, 0.0);

        // Feeder heads energize only when their substation exists, and a head
        // that doubles as a transformer outlet is useless without a live
        // transformer (a powerless closed head never survives the switch
        // whisper costs).
        for (int f = 0; f < F; ++f) {
            int head = net.feeders[f].head_branch;
            int ss_node = -1;
            for (int end : {from_idx(net, head), to_idx(net, head)})
                if (A.is_source[end]) ss_node = end;
            if (ss_node >= 0 && !net.nodes[ss_node].substation.existing) {
                for (int sc = 0; sc < S; ++sc) {
                    LinExpr rg;
                    rg.add(A.sw_var(head, sc, t), 1.0);
                    rg.add(ctx.exists_ss(ss_node, t), -1.0);
                    ctx.add_row(vn("feederGate", {f, sc, t}), rg, RowSense::LE, 0.0);
                }
            }
            int slot = -1;
            for (int s = 0; s < A.n_slots; ++s)
                if (net.transformer_slots[s].outlet_branch == head) slot = s;
            if (slot >= 0) {
                for (int sc = 0; sc < S; ++sc) {
                    LinExpr rg;
                    rg.add(A.sw_var(head, sc, t), 1.0);
                    for (int a = 0; a < A.n_ttypes; ++a) rg.add(ctx.alive_tr(slot, a, t), -1.0);
                    ctx.add_row(vn("headTr", {f, sc, t}), rg, RowSense::LE, 0.0);
                }
            }
        }

        // When power can only enter the grid through feeder heads, every
        // served load must carry a feeder label.
        bool heads_cover_sources = true;
        for (int b = 0; b < B && heads_cover_sources; ++b) {
            bool at_source = A.is_source[from_idx(net, b)] || A.is_source[to_idx(net, b)];
            if (!at_source) continue;
            bool is_head = false;
            for (int f = 0; f < F; ++f)
                if (net.feeders[f].head_branch == b) is_head = true;
            if (!is_head) heads_cover_sources = false;
        }
        if (heads_cover_sources && F > 0) {
            for (int n = 0; n < N; ++n) {
                if (A.is_source[n]) continue;
                if (ctx.eln_of_node.empty() || ctx.eln_of_node[n] < 0) {
                    if (net.nodes[n].load_p[t - 1] <= 0.0 && net.nodes[n].load_q[t - 1] <= 0.0)
                        continue;
                }
                bool eln = !ctx.eln_of_node.empty() && ctx.eln_of_node[n] >= 0;
                if (eln) continue;  // equivalent load may legitimately sit at zero
                LinExpr rc;
                for (int f = 0; f < F; ++f) rc.add(A.h_node_var(n, f, t), 1.0);
                ctx.add_row(vn("labelCover", {n, t}), rc, RowSense::GE, 1.0);
            }
        }
    }
}

void emit_equipment_rows(Ctx& ctx) {
    const Network& net = *ctx.net;
    VariableAtlas& A = ctx.atlas;
    const int T = ctx.T;

    // At most one conductor alive per branch and stage.
    for (int b = 0; b < A.n_branches; ++b) {
        if (ctx.is_eob(b)) continue;
        for (int t = 1; t <= T; ++t) {
            LinExpr e = ctx.built_expr(b, t);
            if (e.has_vars()) ctx.add_row(vn("oneType", {b, t}), e, RowSense::LE, 1.0);
        }
    }
    // At most one transformer alive per slot and stage.
    for (int s = 0; s < A.n_slots; ++s)
        for (int t = 1; t <= T; ++t) {
            LinExpr e;
            for (int a = 0; a < A.n_ttypes; ++a) e.add(ctx.alive_tr(s, a, t), 1.0);
            if (e.has_vars()) ctx.add_row(vn("oneTypeTr", {s, t}), e, RowSense::LE, 1.0);
        }
    // Substations are built at most once over the horizon.
    for (int n = 0; n < A.n_nodes; ++n) {
        if (!net.nodes[n].substation.candidate || net.nodes[n].substation.existing) continue;
        LinExpr e;
        for (int t = 1; t <= T; ++t) e.add(A.ns_var(n, t), 1.0);
        if (e.has_vars()) ctx.add_row(vn("ssOnce", {n}), e, RowSense::LE, 1.0);
    }
    // Transformers only inside existing substations, capped at N_s.
    for (int n = 0; n < A.n_nodes; ++n) {
        const auto& sub = net.nodes[n].substation;
        if (!(sub.candidate || sub.existing)) continue;
        std::vector<int> slots;
        for (int s = 0; s < A.n_slots; ++s)
            if (net.node_index(net.transformer_slots[s].node) == n) slots.push_back(s);
        if (slots.empty()) continue;
        for (int t = 1; t <= T; ++t) {
            LinExpr e;
            for (int s : slots)
                for (int a = 0; a < A.n_ttypes; ++a) e.add(ctx.alive_tr(s, a, t), 1.0);
            e.add(ctx.exists_ss(n, t), -static_cast<double>(sub.max_transformers));
            ctx.add_row(vn("trLogic", {n, t}), e, RowSense::LE, 0.0);
        }
    }
}

void emit_reliability_rows(Ctx& ctx) {
    const Network& net = *ctx.net;
    VariableAtlas& A = ctx.atlas;
    const int T = ctx.T, N = A.n_nodes, B = A.n_branches;

    for (int t = 1; t <= T; ++t) {
        for (int n = 0; n < N; ++n) {
            if (A.is_source[n]) continue;
            LinExpr ecif, ecid;
            ecif.add(A.cif_var(n, t), 1.0);
            ecid.add(A.cid_var(n, t), 1.0);
            for (int f = 0; f < B; ++f) {
                int xy = A.scenarios.fault_branches[f];
                const Branch& br = net.branches[xy];
                int ap = A.aux_lam_p_var(n, f, t);
                int aq = A.aux_lam_q_var(n, f, t);
                if (ctx.is_eob(xy)) {
                    // CIF takes the EOB failure rate; CID takes the u-product.
                    if (ap >= 0) ecif.add(ap, -1.0);
                    ecid.add(A.aux_u_var(n, t), -1.0);
                    continue;
                }
                if (ap >= 0) {
                    ecif.add(ap, -1.0);
                    ecid.add(ap, -br.switch_time_h);
                } else {
                    LinExpr lam = ctx.lambda_expr(xy, t);
                    double c = lam.constant;  // constant failure rate
                    if (c != 0.0) {
                        ecif.add(A.p_var(n, f, t), -c);
                        ecid.add(A.p_var(n, f, t), -c * br.switch_time_h);
                    }
                }
                double tau_rep = br.repair_time_h - br.switch_time_h;
                if (aq >= 0) {
                    ecid.add(aq, -tau_rep);
                } else {
                    LinExpr lam = ctx.lambda_expr(xy, t);
                    if (lam.constant != 0.0) ecid.add(A.q_var(n, f, t), -lam.constant * tau_rep);
                }
            }
            ctx.add_row(vn("cifDef", {n, t}), ecif, RowSense::EQ, 0.0);
            ctx.add_row(vn("cidDef", {n, t}), ecid, RowSense::EQ, 0.0);
        }

        for (size_t a = 0; a < A.area_keys.size(); ++a) {
            double total_cust = 0.0;
            for (int n : A.area_nodes[a]) total_cust += static_cast<double>(net.nodes[n].customers);
            if (total_cust <= 0.0) continue;
            LinExpr e;
            e.add(A.saidi_var(static_cast<int>(a), t), total_cust);
            for (int n : A.area_nodes[a]) {
                if (A.is_source[n] || net.nodes[n].customers == 0) continue;
                e.add(A.cid_var(n, t), -static_cast<double>(net.nodes[n].customers));
            }
            ctx.add_row(vn("saidiDef", {static_cast<int>(a), t}), e, RowSense::EQ, 0.0);
        }

        LinExpr ee;
        ee.add(A.eens_var(t), 1.0);
        for (int n = 0; n < N; ++n) {
            if (A.is_source[n]) continue;
            if (ctx.kind == ViewKind::Backbone && ctx.eln_of_node[n] >= 0)
                continue;  // area energy is priced by the sub-area model
            double lp = net.nodes[n].load_p[t - 1];
            if (lp != 0.0) ee.add(A.cid_var(n, t), -lp);
        }
        ctx.add_row(vn("eensDef", {t}), ee, RowSense::EQ, 0.0);

        // Boundary capacity variable mirrors the built boundary conductor.
        if (ctx.kind == ViewKind::Backbone) {
            for (size_t e = 0; e < ctx.bb->elns.size(); ++e) {
                LinExpr es;
                es.add(A.s_bd_var(static_cast<int>(e), t), 1.0);
                es.add(ctx.capacity_expr(ctx.bb->elns[e].boundary_branch, t), -1.0);
                ctx.add_row(vn("sBdDef", {static_cast<int>(e), t}), es, RowSense::EQ, 0.0);
            }
        }
    }
}

void emit_objective(Ctx& ctx) {
    const Network& net = *ctx.net;
    VariableAtlas& A = ctx.atlas;
    MilpModel& M = ctx.model;
    const int T = ctx.T;

    for (int t = 1; t <= T; ++t) {
        const double di = ctx.pv.invest(t - 1);
        const double dop = ctx.pv.operate(t - 1);

        for (int b = 0; b < A.n_branches; ++b) {
            if (ctx.is_eob(b)) continue;
            double d = net.branches[b].length_km;
            for (int a = 0; a < A.n_ctypes; ++a) {
                const ConductorType& cty = net.catalog.conductors[a];
                M.add_objective(A.l_var(b, a, t), di * cty.invest_cost * d);
            }
        }
        for (int s = 0; s < A.n_slots; ++s)
            for (int a = 0; a < A.n_ttypes; ++a)
                M.add_objective(A.mtr_var(s, a, t), di * net.catalog.transformers[a].invest_cost);
        for (int n = 0; n < A.n_nodes; ++n) {
            int v = A.ns_var(n, t);
            if (v >= 0) M.add_objective(v, di * net.nodes[n].substation.invest_cost);
        }

        // Maintenance accrues for every alive piece of equipment.
        for (int b = 0; b < A.n_branches; ++b) {
            if (ctx.is_eob(b)) continue;
            double d = net.branches[b].length_km;
            for (int a = 0; a < A.n_ctypes; ++a) {
                const ConductorType& cty = net.catalog.conductors[a];
                LinExpr alive = ctx.alive_c(b, a, t);
                for (size_t k = 0; k < alive.idx.size(); ++k)
                    M.add_objective(alive.idx[k], dop * cty.maint_cost * d * alive.coef[k]);
                M.objective_constant += dop * cty.maint_cost * d * alive.constant;
            }
        }
        for (int s = 0; s < A.n_slots; ++s)
            for (int a = 0; a < A.n_ttypes; ++a) {
                LinExpr alive = ctx.alive_tr(s, a, t);
                for (size_t k = 0; k < alive.idx.size(); ++k)
                    M.add_objective(alive.idx[k],
                                    dop * net.catalog.transformers[a].maint_cost * alive.coef[k]);
            }
        for (int n = 0; n < A.n_nodes; ++n) {
            const auto& sub = net.nodes[n].substation;
            if (!(sub.candidate || sub.existing)) continue;
            LinExpr ex = ctx.exists_ss(n, t);
            for (size_t k = 0; k < ex.idx.size(); ++k)
                M.add_objective(ex.idx[k], dop * sub.maint_cost * ex.coef[k]);
            M.objective_constant += dop * sub.maint_cost * ex.constant;
        }

        M.add_objective(A.eens_var(t), dop * net.horizon.eens_weight);
    }

    if (ctx.opts.tie_breaks) {
        for (int n = 0; n < A.n_nodes; ++n) {
            if (A.is_source[n]) continue;
            bool eln = !ctx.eln_of_node.empty() && ctx.eln_of_node[n] >= 0;
            for (int f = 0; f < A.n_branches; ++f)
                for (int t = 1; t <= T; ++t) {
                    M.add_objective(A.p_var(n, f, t), kTieEpsAffected);
                    M.add_objective(A.q_var(n, f, t), eln ? kTieEpsOutage : -kTieEpsOutage);
                }
        }
        // Distinct whisper costs on switches collapse equal-cost path splits
        // to a single deterministic vertex.
        constexpr double kTieEpsSwitch = 2e-6;
        for (int b = 0; b < A.n_branches; ++b)
            for (int sc = 0; sc < A.scenarios.count(); ++sc)
                for (int t = 1; t <= T; ++t)
                    M.add_objective(A.sw_var(b, sc, t), kTieEpsSwitch * (1 + b % 5));
    }
}

// Per-scenario reachability fixings: nodes cut from every possible source go
// straight to permanent outage, branches into dead regions stay open. The
// presolve inside milp-core then folds the dead blocks away.
void apply_structural_fixing(Ctx& ctx) {
    const Network& net = *ctx.net;
    VariableAtlas& A = ctx.atlas;
    const int N = A.n_nodes, B = A.n_branches;

    std::vector<int> from(B), to(B);
    for (int b = 0; b < B; ++b) {
        from[b] = from_idx(net, b);
        to[b] = to_idx(net, b);
    }

    auto reach_without = [&](int removed) {
        std::vector<char> reach(N, 0);
        std::vector<int> stack;
        for (int n = 0; n < N; ++n)
            if (A.is_source[n]) {
                reach[n] = 1;
                stack.push_back(n);
            }
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            for (int b = 0; b < B; ++b) {
                if (b == removed) continue;
                int v = -1;
                if (from[b] == u) v = to[b];
                if (to[b] == u) v = from[b];
                if (v >= 0 && !reach[v]) {
                    reach[v] = 1;
                    stack.push_back(v);
                }
            }
        }
        return reach;
    };
    auto must_serve = [&](int n, int t) {
        if (!ctx.eln_of_node.empty() && ctx.eln_of_node[n] >= 0) return false;
        return net.nodes[n].load_p[t - 1] > 0.0 || net.nodes[n].load_q[t - 1] > 0.0;
    };

    for (int sc = 1; sc < A.scenarios.count(); ++sc) {
        int xy = A.scenarios.fault_branches[sc - 1];
        std::vector<char> reach = reach_without(xy);
        for (int t = 1; t <= ctx.T; ++t) {
            for (int n = 0; n < N; ++n) {
                if (A.is_source[n] || reach[n]) continue;
                ctx.model.vars[A.q_var(n, sc - 1, t)].lb = 1.0;
                // The cut branch carried this load in the normal state, so
                // the node shares its feeder and counts as affected.
                if (must_serve(n, t)) ctx.model.vars[A.p_var(n, sc - 1, t)].lb = 1.0;
            }
            for (int b = 0; b < B; ++b) {
                if (b == xy) continue;
                if (!reach[from[b]] || !reach[to[b]]) ctx.model.vars[A.sw_var(b, sc, t)].ub = 0.0;
            }
        }
    }

    // Normal operation must serve every load, so a branch whose removal cuts
    // some load off from all sources is forced closed (and therefore built).
    for (int b = 0; b < B; ++b) {
        std::vector<char> reach = reach_without(b);
        for (int t = 1; t <= ctx.T; ++t) {
            bool needed = false;
            for (int n = 0; n < N && !needed; ++n)
                if (!A.is_source[n] && !reach[n] && must_serve(n, t)) needed = true;
            if (!needed) continue;
            ctx.model.vars[A.sw_var(b, 0, t)].lb = 1.0;
            LinExpr built = ctx.built_expr(b, t);
            if (built.has_vars()) ctx.add_row(vn("bridgeBuild", {b, t}), built, RowSense::GE, 1.0);
        }
    }

    // Degree cuts: a served node keeps at least one closed incident branch,
    // and an ELN or load node restored after a fault keeps one besides the
    // faulted branch.
    for (int n = 0; n < N; ++n) {
        if (A.is_source[n]) continue;
        std::vector<int> incident;
        for (int b = 0; b < B; ++b)
            if (from[b] == n || to[b] == n) incident.push_back(b);
        bool eln = !ctx.eln_of_node.empty() && ctx.eln_of_node[n] >= 0;
        for (int t = 1; t <= ctx.T; ++t) {
            if (!must_serve(n, t) && !eln) continue;
            if (!eln) {
                LinExpr deg;
                for (int b : incident) deg.add(A.sw_var(b, 0, t), 1.0);
                ctx.add_row(vn("degreeNO", {n, t}), deg, RowSense::GE, 1.0);
            }
            for (int sc = 1; sc < A.scenarios.count(); ++sc) {
                int xy = A.scenarios.fault_branches[sc - 1];
                LinExpr deg;
                for (int b : incident)
                    if (b != xy) deg.add(A.sw_var(b, sc, t), 1.0);
                deg.add(A.q_var(n, sc - 1, t), 1.0);
                ctx.add_row(vn("degreeF", {n, sc, t}), deg, RowSense::GE, 1.0);
            }
        }
    }
}

BuildResult build_impl(const Network& net, ViewKind kind, const BackboneView* bb,
                       const SubAreaView* sa, const BuildOptions& opts) {
    Ctx ctx;
    ctx.net = &net;
    ctx.kind = kind;
    ctx.bb = bb;
    ctx.sa = sa;
    ctx.opts = opts;
    ctx.T = net.horizon.stages;
    ctx.pv = present_value_factors(net.horizon);
    ctx.max_s = net.catalog.max_conductor_capacity();

    VariableAtlas& A = ctx.atlas;
    A.kind = kind;
    A.stages = ctx.T;
    A.n_nodes = static_cast<int>(net.nodes.size());
    A.n_branches = static_cast<int>(net.branches.size());
    A.n_feeders = static_cast<int>(net.feeders.size());
    A.n_slots = static_cast<int>(net.transformer_slots.size());
    A.n_ctypes = static_cast<int>(net.catalog.conductors.size());
    A.n_ttypes = static_cast<int>(net.catalog.transformers.size());
    for (int b = 0; b < A.n_branches; ++b) A.scenarios.fault_branches.push_back(b);

    A.is_source.assign(A.n_nodes, 0);
    bool any_source = false;
    for (int n = 0; n < A.n_nodes; ++n) {
        if (net.nodes[n].source_candidate()) {
            A.is_source[n] = 1;
            any_source = true;
        }
    }
    if (!any_source) throw BuildError("network has no substation candidate");

    ctx.eln_of_node.assign(A.n_nodes, -1);
    A.is_eln.assign(A.n_nodes, 0);
    if (kind == ViewKind::Backbone) {
        for (size_t e = 0; e < bb->elns.size(); ++e) {
            int n = net.node_index(bb->elns[e].node_id);
            ctx.eln_of_node[n] = static_cast<int>(e);
            A.is_eln[n] = 1;
            A.eln_node.push_back(n);
        }
    }
    if (kind == ViewKind::SubArea) {
        A.eds_node = net.node_index(sa->eob.eds_node_id);
        A.eob_branch = sa->eob.eob_branch;
    }

    // SAIDI areas with node sets.
    for (const auto& [key, lim] : net.horizon.saidi_limit) {
        (void)lim;
        std::vector<int> nodes;
        if (key == "backbone") {
            if (net.partition.backbone.empty()) {
                for (int n = 0; n < A.n_nodes; ++n) nodes.push_back(n);
            } else {
                for (const auto& id : net.partition.backbone) {
                    int n = net.node_index(id);
                    if (n >= 0) nodes.push_back(n);
                }
            }
        } else if (key.size() > 1 && key[0] == 's') {
            int a = std::atoi(key.c_str() + 1);
            if (kind == ViewKind::SubArea) {
                for (int n = 0; n < A.n_nodes; ++n)
                    if (n != A.eds_node) nodes.push_back(n);
            } else if (a >= 0 && a < static_cast<int>(net.partition.sub_areas.size())) {
                for (const auto& id : net.partition.sub_areas[a].nodes) {
                    int n = net.node_index(id);
                    if (n >= 0) nodes.push_back(n);
                }
            } else {
                throw BuildError("SAIDI limit references unknown area " + key);
            }
        } else {
            throw BuildError("SAIDI limit references unknown area " + key);
        }
        A.area_keys.push_back(key);
        A.area_nodes.push_back(std::move(nodes));
    }
    if (kind == ViewKind::Centralized && A.area_keys.empty())
        throw BuildError("network carries no SAIDI requirement");

    ctx.total_p.assign(ctx.T, 0.0);
    ctx.total_q.assign(ctx.T, 0.0);
    for (int t = 1; t <= ctx.T; ++t) {
        ctx.total_p[t - 1] = net.total_load_p(t);
        ctx.total_q[t - 1] = net.total_load_q(t);
        if (kind == ViewKind::Backbone)
            for (const auto& e : bb->elns) {
                ctx.total_p[t - 1] += e.bounds.p_max;
                ctx.total_q[t - 1] += e.bounds.q_max;
            }
        if (ctx.total_p[t - 1] <= 0.0) ctx.total_p[t - 1] = 1.0;
        if (ctx.total_q[t - 1] <= 0.0) ctx.total_q[t - 1] = 1.0;
    }

    ctx.model.module_tag = kind == ViewKind::Centralized
                               ? "centralized"
                               : (kind == ViewKind::Backbone ? "backbone"
                                                             : "subarea" + std::to_string(sa->area_index));

    create_variables(ctx);
    emit_operation_rows(ctx);
    emit_equipment_rows(ctx);
    emit_reliability_rows(ctx);
    emit_objective(ctx);
    if (opts.structural_fixing) apply_structural_fixing(ctx);

    // Branching tiers: investment decisions shape everything downstream, the
    // normal topology next, then fault indicators, then restoration switches.
    ctx.model.branch_priority.assign(ctx.model.num_vars(), 9);
    for (int v : A.l)
        if (v >= 0) ctx.model.branch_priority[v] = 0;
    for (int v : A.mtr)
        if (v >= 0) ctx.model.branch_priority[v] = 0;
    for (int v : A.ns)
        if (v >= 0) ctx.model.branch_priority[v] = 0;
    for (int t = 1; t <= ctx.T; ++t)
        for (int b = 0; b < A.n_branches; ++b) {
            ctx.model.branch_priority[A.sw_var(b, 0, t)] = 1;
            for (int sc = 1; sc < A.scenarios.count(); ++sc)
                ctx.model.branch_priority[A.sw_var(b, sc, t)] = 3;
        }
    for (int v : A.p_aff)
        if (v >= 0) ctx.model.branch_priority[v] = 2;
    for (int v : A.q_out)
        if (v >= 0) ctx.model.branch_priority[v] = 2;

    ctx.model.check_well_formed();
    return {std::move(ctx.model), std::move(ctx.atlas)};
}

}  // namespace

BuildResult build_centralized(const Network& net, const BuildOptions& opts) {
    return build_impl(net, ViewKind::Centralized, nullptr, nullptr, opts);
}

BuildResult build_backbone_subproblem(const BackboneView& view, const BuildOptions& opts) {
    return build_impl(view.net, ViewKind::Backbone, &view, nullptr, opts);
}

BuildResult build_subarea_subproblem(const SubAreaView& view, const BuildOptions& opts) {
    return build_impl(view.net, ViewKind::SubArea, nullptr, &view, opts);
}

// ---------------------------------------------------------------------------
// Atlas reconstruction helpers
// ---------------------------------------------------------------------------

double VariableAtlas::lambda_at(const Network& net, int branch, int stage, const Vector& x) const {
    if (kind == ViewKind::SubArea && branch == eob_branch) return x(lam_eob_v[stage - 1]);
    double lam = 0.0;
    for (int a = 0; a < n_ctypes; ++a) {
        const ConductorType& ct = net.catalog.conductors[a];
        double alive = 0.0;
        for (int tau = std::max(1, stage - ct.lifespan_stages + 1); tau <= stage; ++tau)
            alive += x(l_var(branch, a, tau));
        if (net.branches[branch].existing_conductor == ct.id &&
            stage <= ct.remaining_lifespan_stages)
            alive += 1.0;
        lam += std::round(alive) * ct.failure_rate_per_km * net.branches[branch].length_km;
    }
    return lam;
}

double VariableAtlas::capacity_at(const Network& net, int branch, int stage, const Vector& x) const {
    if (kind == ViewKind::SubArea && branch == eob_branch) return x(s_eob_v[stage - 1]);
    double cap = 0.0;
    for (int a = 0; a < n_ctypes; ++a) {
        const ConductorType& ct = net.catalog.conductors[a];
        double alive = 0.0;
        for (int tau = std::max(1, stage - ct.lifespan_stages + 1); tau <= stage; ++tau)
            alive += x(l_var(branch, a, tau));
        if (net.branches[branch].existing_conductor == ct.id &&
            stage <= ct.remaining_lifespan_stages)
            alive += 1.0;
        cap += std::round(alive) * ct.capacity_mva;
    }
    return cap;
}

std::string VariableAtlas::dump_json() const {
    nlohmann::json j;
    auto put = [&](const std::string& key, int v) {
        if (v >= 0) j[key] = v;
    };
    for (int t = 1; t <= stages; ++t) {
        std::string st = "t" + std::to_string(t);
        for (int b = 0; b < n_branches; ++b)
            for (int a = 0; a < n_ctypes; ++a)
                put("l." + st + ".b" + std::to_string(b) + ".c" + std::to_string(a), l_var(b, a, t));
        for (int s = 0; s < n_slots; ++s)
            for (int a = 0; a < n_ttypes; ++a)
                put("m." + st + ".slot" + std::to_string(s) + ".a" + std::to_string(a),
                    mtr_var(s, a, t));
        for (int n = 0; n < n_nodes; ++n) put("ns." + st + ".n" + std::to_string(n), ns_var(n, t));
        for (int sc = 0; sc < scenarios.count(); ++sc) {
            std::string sn = scenarios.name(sc);
            for (int b = 0; b < n_branches; ++b) {
                put("fp." + st + "." + sn + ".b" + std::to_string(b), flow_p_var(b, sc, t));
                put("fq." + st + "." + sn + ".b" + std::to_string(b), flow_q_var(b, sc, t));
                put("sw." + st + "." + sn + ".b" + std::to_string(b), sw_var(b, sc, t));
            }
            for (int n = 0; n < n_nodes; ++n) {
                put("u." + st + "." + sn + ".n" + std::to_string(n), volt_var(n, sc, t));
                if (sc > 0) {
                    put("p." + st + "." + sn + ".n" + std::to_string(n), p_var(n, sc - 1, t));
                    put("q." + st + "." + sn + ".n" + std::to_string(n), q_var(n, sc - 1, t));
                }
            }
        }
        for (int n = 0; n < n_nodes; ++n) {
            put("cif." + st + ".n" + std::to_string(n), cif_var(n, t));
            put("cid." + st + ".n" + std::to_string(n), cid_var(n, t));
        }
        for (size_t a = 0; a < area_keys.size(); ++a)
            put("saidi." + st + "." + area_keys[a], saidi_var(static_cast<int>(a), t));
        put("eens." + st, eens_var(t));
        for (size_t e = 0; e < pd.size() / std::max(1, stages); ++e) {
            put("pd." + st + ".e" + std::to_string(e), pd_var(static_cast<int>(e), t));
            put("qd." + st + ".e" + std::to_string(e), qd_var(static_cast<int>(e), t));
            put("sbd." + st + ".e" + std::to_string(e), s_bd_var(static_cast<int>(e), t));
        }
        if (!lam_eob_v.empty()) {
            put("lamEob." + st, lam_eob_v[t - 1]);
            put("uEob." + st, u_eob_v[t - 1]);
            put("sEob." + st, s_eob_v[t - 1]);
        }
    }
    return j.dump(2);
}

// ---------------------------------------------------------------------------
// Selectors
// ---------------------------------------------------------------------------

Selectors selection_matrices(const PartitionedNetwork& part, const VariableAtlas& ba,
                             const std::vector<VariableAtlas>& sas) {
    Selectors sel;
    const int T = part.original.horizon.stages;
    if (sas.size() != part.sub_areas.size())
        throw Error("selector construction: atlas count mismatch");
    for (size_t a = 0; a < part.sub_areas.size(); ++a) {
        const VariableAtlas& sa = sas[a];
        std::vector<int> sub;
        int eln_node = ba.eln_node.at(a);
        for (int t = 1; t <= T; ++t) {
            sel.backbone.push_back(ba.cif_var(eln_node, t));
            sel.backbone.push_back(ba.cid_var(eln_node, t));
            sel.backbone.push_back(ba.pd_var(static_cast<int>(a), t));
            sel.backbone.push_back(ba.qd_var(static_cast<int>(a), t));
            sel.backbone.push_back(ba.s_bd_var(static_cast<int>(a), t));
            sel.backbone.push_back(ba.volt_var(eln_node, 0, t));

            sub.push_back(sa.lam_eob_v[t - 1]);
            sub.push_back(sa.u_eob_v[t - 1]);
            sub.push_back(sa.flow_p_var(sa.eob_branch, 0, t));
            sub.push_back(sa.flow_q_var(sa.eob_branch, 0, t));
            sub.push_back(sa.s_eob_v[t - 1]);
            sub.push_back(sa.u_ss_var(sa.eds_node, t));
        }
        if (static_cast<int>(sub.size()) != T * kBoundaryQuantities)
            throw Error("selector construction: sub-area slice length mismatch");
        for (int v : sub)
            if (v < 0) throw Error("selector construction: missing sub-area variable");
        sel.sub.push_back(std::move(sub));
    }
    for (int v : sel.backbone)
        if (v < 0) throw Error("selector construction: missing backbone variable");
    return sel;
}

// ---------------------------------------------------------------------------
// Plan extraction
// ---------------------------------------------------------------------------

namespace {

double binary_value(const MilpSolution& sol, int var, const std::string& what) {
    double v = sol.values(var);
    double r = std::round(v);
    if (std::abs(v - r) > 1e-6)
        throw ExtractionError("fractional binary " + what + " = " + std::to_string(v));
    return r;
}

}  // namespace

std::optional<std::string> alive_conductor(const Network& net, const Plan& plan, int branch,
                                           int stage) {
    const Branch& br = net.branches[branch];
    if (!br.existing_conductor.empty()) {
        const ConductorType* ct = net.catalog.find_conductor(br.existing_conductor);
        if (ct != nullptr && stage <= ct->remaining_lifespan_stages) return br.existing_conductor;
    }
    for (int tau = 1; tau <= stage; ++tau) {
        auto it = plan.builds[tau - 1].conductors.find(branch);
        if (it == plan.builds[tau - 1].conductors.end()) continue;
        const ConductorType* ct = net.catalog.find_conductor(it->second);
        if (ct != nullptr && stage <= tau + ct->lifespan_stages - 1) return it->second;
    }
    return std::nullopt;
}

std::optional<std::string> alive_transformer(const Network& net, const Plan& plan,
                                             const std::string& slot_id, int stage) {
    for (int tau = 1; tau <= stage; ++tau) {
        auto it = plan.builds[tau - 1].transformers.find(slot_id);
        if (it == plan.builds[tau - 1].transformers.end()) continue;
        const TransformerType* tt = net.catalog.find_transformer(it->second);
        if (tt != nullptr && stage <= tau + tt->lifespan_stages - 1) return it->second;
    }
    return std::nullopt;
}

bool substation_exists(const Network& net, const Plan& plan, const std::string& node_id,
                       int stage) {
    const Node& n = net.node(node_id);
    if (n.substation.existing) return true;
    for (int tau = 1; tau <= stage; ++tau) {
        const auto& v = plan.builds[tau - 1].substations;
        if (std::find(v.begin(), v.end(), node_id) != v.end()) return true;
    }
    return false;
}

Plan extract_plan(const VariableAtlas& atlas, const Network& net, const MilpSolution& sol) {
    if (sol.status != SolveStatus::Optimal)
        throw ExtractionError("cannot extract a plan from a non-optimal solution");

    Plan plan;
    plan.stages = atlas.stages;
    plan.builds.resize(atlas.stages);
    plan.normal_closed.resize(atlas.stages);
    plan.feeder_of.resize(atlas.stages);
    plan.network_hash = network_hash(net);

    for (int t = 1; t <= atlas.stages; ++t) {
        for (int b = 0; b < atlas.n_branches; ++b)
            for (int a = 0; a < atlas.n_ctypes; ++a) {
                int v = atlas.l_var(b, a, t);
                if (v < 0) continue;
                if (binary_value(sol, v, "l") > 0.5)
                    plan.builds[t - 1].conductors[b] = net.catalog.conductors[a].id;
            }
        for (int s = 0; s < atlas.n_slots; ++s)
            for (int a = 0; a < atlas.n_ttypes; ++a) {
                int v = atlas.mtr_var(s, a, t);
                if (v < 0) continue;
                if (binary_value(sol, v, "m") > 0.5)
                    plan.builds[t - 1].transformers[net.transformer_slots[s].id] =
                        net.catalog.transformers[a].id;
            }
        for (int n = 0; n < atlas.n_nodes; ++n) {
            int v = atlas.ns_var(n, t);
            if (v < 0) continue;
            if (binary_value(sol, v, "ns") > 0.5)
                plan.builds[t - 1].substations.push_back(net.nodes[n].id);
        }
        for (int b = 0; b < atlas.n_branches; ++b) {
            if (atlas.kind == ViewKind::SubArea && b == atlas.eob_branch) continue;
            if (binary_value(sol, atlas.sw_var(b, 0, t), "sw") > 0.5)
                plan.normal_closed[t - 1].push_back(b);
        }
        for (int n = 0; n < atlas.n_nodes; ++n) {
            if (atlas.is_source[n]) continue;
            for (int f = 0; f < atlas.n_feeders; ++f) {
                int v = atlas.h_node_var(n, f, t);
                if (v >= 0 && sol.values(v) > 0.5)
                    plan.feeder_of[t - 1][net.nodes[n].id] = net.feeders[f].id;
            }
        }
        // Unused here but part of the contract: every other binary must be
        // integral too.
        for (int sc = 1; sc < atlas.scenarios.count(); ++sc)
            for (int b = 0; b < atlas.n_branches; ++b)
                binary_value(sol, atlas.sw_var(b, sc, t), "sw_fault");

        // Normal topology must be a forest rooted at live substations that
        // reaches every load.
        std::vector<int> parent(atlas.n_nodes);
        std::iota(parent.begin(), parent.end(), 0);
        std::function<int(int)> find = [&](int x) {
            while (parent[x] != x) x = parent[x] = parent[parent[x]];
            return x;
        };
        std::vector<int> closed_for_check = plan.normal_closed[t - 1];
        if (atlas.kind == ViewKind::SubArea &&
            binary_value(sol, atlas.sw_var(atlas.eob_branch, 0, t), "sw_eob") > 0.5)
            closed_for_check.push_back(atlas.eob_branch);
        for (int b : closed_for_check) {
            int u = find(from_idx(net, b)), v = find(to_idx(net, b));
            if (u == v) throw ExtractionError("normal topology contains a cycle");
            parent[u] = v;
        }
        for (int n = 0; n < atlas.n_nodes; ++n) {
            if (net.nodes[n].load_p[t - 1] <= 0.0) continue;
            bool fed = false;
            for (int m = 0; m < atlas.n_nodes; ++m) {
                if (!atlas.is_source[m]) continue;
                if (find(n) == find(m)) {
                    fed = true;
                    break;
                }
            }
            if (!fed) throw ExtractionError("normal topology strands load at node " + net.nodes[n].id);
        }
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Internal reliability indices
// ---------------------------------------------------------------------------

IndicesReport internal_reliability_indices(const VariableAtlas& atlas, const Network& net,
                                           const MilpSolution& sol) {
    if (sol.status != SolveStatus::Optimal)
        throw Error("reliability indices need an optimal solution");
    IndicesReport rep;
    std::vector<int> nodes;
    for (int n = 0; n < atlas.n_nodes; ++n)
        if (!atlas.is_source[n]) {
            nodes.push_back(n);
            rep.node_ids.push_back(net.nodes[n].id);
        }
    rep.cif.setZero(nodes.size(), atlas.stages);
    rep.cid.setZero(nodes.size(), atlas.stages);

    for (int t = 1; t <= atlas.stages; ++t) {
        for (size_t k = 0; k < nodes.size(); ++k) {
            int n = nodes[k];
            double cif = 0.0, cid = 0.0;
            for (int f = 0; f < atlas.n_branches; ++f) {
                int xy = atlas.scenarios.fault_branches[f];
                double lam = atlas.lambda_at(net, xy, t, sol.values);
                double p = std::round(sol.values(atlas.p_var(n, f, t)));
                double q = std::round(sol.values(atlas.q_var(n, f, t)));
                if (atlas.kind == ViewKind::SubArea && xy == atlas.eob_branch) {
                    double u = sol.values(atlas.u_eob_v[t - 1]);
                    cif += lam * p;
                    cid += u * p;
                    continue;
                }
                const Branch& br = net.branches[xy];
                cif += lam * p;
                cid += lam * br.switch_time_h * p +
                       lam * (br.repair_time_h - br.switch_time_h) * q;
            }
            rep.cif(k, t - 1) = cif;
            rep.cid(k, t - 1) = cid;
            double mcif = sol.values(atlas.cif_var(n, t));
            double mcid = sol.values(atlas.cid_var(n, t));
            if (std::abs(mcif - cif) > 1e-6 || std::abs(mcid - cid) > 1e-6)
                throw ConsistencyError("model reliability variables disagree with recomputation at node " +
                                       net.nodes[n].id + " (cif " + std::to_string(mcif) + " vs " +
                                       std::to_string(cif) + ", cid " + std::to_string(mcid) +
                                       " vs " + std::to_string(cid) + ")");
        }
    }

    for (size_t a = 0; a < atlas.area_keys.size(); ++a) {
        Vector v(atlas.stages);
        for (int t = 1; t <= atlas.stages; ++t) {
            double total = 0.0, acc = 0.0;
            for (int n : atlas.area_nodes[a]) {
                total += static_cast<double>(net.nodes[n].customers);
                if (atlas.is_source[n] || net.nodes[n].customers == 0) continue;
                auto it = std::find(nodes.begin(), nodes.end(), n);
                acc += static_cast<double>(net.nodes[n].customers) *
                       rep.cid(std::distance(nodes.begin(), it), t - 1);
            }
            double saidi = total > 0 ? acc / total : 0.0;
            v(t - 1) = saidi;
            int sv = atlas.saidi_var(static_cast<int>(a), t);
            if (sv >= 0 && total > 0 && std::abs(sol.values(sv) - saidi) > 1e-6)
                throw ConsistencyError("model SAIDI disagrees with recomputation for area " +
                                       atlas.area_keys[a]);
        }
        rep.saidi[atlas.area_keys[a]] = v;
    }
    return rep;
}

}  // namespace gridplan
