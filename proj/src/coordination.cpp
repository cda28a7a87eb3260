#include "gridplan/coordination.hpp"

#include "gridplan/logging.hpp"
#include "gridplan/reliability.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <thread>

namespace gridplan {

// ---------------------------------------------------------------------------
// Config and trace plumbing
// ---------------------------------------------------------------------------

CoordinationConfig CoordinationConfig::from_json_text(const std::string& text) {
    CoordinationConfig cfg;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid coordination config: ") + e.what());
    }
    auto get = [&](const char* key, auto& slot) {
        if (j.contains(key)) slot = j[key].template get<std::decay_t<decltype(slot)>>();
    };
    get("gamma", cfg.gamma);
    get("tMax", cfg.t_max);
    get("kMax", cfg.k_max);
    get("epsTol", cfg.eps_tol);
    get("rho0", cfg.rho0);
    get("rhoMin", cfg.rho_min);
    get("rhoMax", cfg.rho_max);
    get("delta", cfg.delta);
    get("accelerate", cfg.accelerate);
    get("workers", cfg.workers);
    get("seed", cfg.seed);
    get("mipGap", cfg.milp.rel_gap);
    get("nodeLimit", cfg.milp.node_limit);
    return cfg;
}

std::string CoordinationConfig::to_json_text() const {
    nlohmann::json j;
    j["gamma"] = gamma;
    j["tMax"] = t_max;
    j["kMax"] = k_max;
    j["epsTol"] = eps_tol;
    j["rho0"] = rho0;
    j["rhoMin"] = rho_min;
    j["rhoMax"] = rho_max;
    j["delta"] = delta;
    j["accelerate"] = accelerate;
    j["workers"] = workers;
    j["seed"] = seed;
    j["mipGap"] = milp.rel_gap;
    j["nodeLimit"] = milp.node_limit;
    return j.dump(2) + "\n";
}

std::string ConvergenceTrace::to_csv() const {
    std::ostringstream os;
    os << "k,sumEps,eta,rho,seriousStep,restart,incumbentCost,wallMs\n";
    char buf[256];
    for (const TraceRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%d,%d,%.10g,%.3f\n", r.k, r.sum_eps,
                      r.eta, r.rho, r.serious ? 1 : 0, r.restart ? 1 : 0, r.incumbent_cost,
                      r.wall_ms);
        os << buf;
    }
    return os.str();
}

ConvergenceTrace ConvergenceTrace::from_csv(const std::string& text) {
    ConvergenceTrace tr;
    std::istringstream is(text);
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        if (first) {
            first = false;
            continue;
        }
        if (line.empty()) continue;
        TraceRow r;
        int serious = 0, restart = 0;
        if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%d,%d,%lf,%lf", &r.k, &r.sum_eps, &r.eta,
                        &r.rho, &serious, &restart, &r.incumbent_cost, &r.wall_ms) != 8)
            throw ParseError("malformed trace row: " + line);
        r.serious = serious != 0;
        r.restart = restart != 0;
        tr.rows.push_back(r);
    }
    return tr;
}

// ---------------------------------------------------------------------------
// VertexSet
// ---------------------------------------------------------------------------

int VertexSet::add(Vector x, double fcost, Vector qx) {
    for (size_t i = 0; i < vertices_.size(); ++i) {
        if (vertices_[i].size() == x.size() &&
            (vertices_[i] - x).lpNorm<Eigen::Infinity>() <= kDedupTol) {
            touch(static_cast<int>(i));
            return static_cast<int>(i);
        }
    }
    if (static_cast<int>(vertices_.size()) >= kCapacity) {
        int victim = -1;
        long oldest = std::numeric_limits<long>::max();
        for (size_t i = 0; i < vertices_.size(); ++i) {
            if (static_cast<int>(i) == best_) continue;
            if (last_used_[i] < oldest) {
                oldest = last_used_[i];
                victim = static_cast<int>(i);
            }
        }
        if (victim < 0) return -1;
        vertices_.erase(vertices_.begin() + victim);
        fcost_.erase(fcost_.begin() + victim);
        qx_.erase(qx_.begin() + victim);
        last_used_.erase(last_used_.begin() + victim);
        if (best_ > victim) --best_;
    }
    vertices_.push_back(std::move(x));
    fcost_.push_back(fcost);
    qx_.push_back(std::move(qx));
    last_used_.push_back(++clock_);
    return static_cast<int>(vertices_.size()) - 1;
}

// ---------------------------------------------------------------------------
// Projection and hull minimization
// ---------------------------------------------------------------------------

Vector project_coordination(const Vector& backbone_slice, const std::vector<Vector>& sub_slices) {
    int total = 0;
    for (const Vector& s : sub_slices) total += static_cast<int>(s.size());
    if (backbone_slice.size() != total)
        throw Error("projection: slice lengths do not match the selector layout");
    Vector z(total);
    int off = 0;
    for (const Vector& s : sub_slices) {
        for (int i = 0; i < s.size(); ++i) z(off + i) = 0.5 * (backbone_slice(off + i) + s(i));
        off += static_cast<int>(s.size());
    }
    return z;
}

namespace {

// Euclidean projection onto the unit simplex.
Vector project_simplex(const Vector& v) {
    const int n = static_cast<int>(v.size());
    std::vector<double> u(v.data(), v.data() + n);
    std::sort(u.begin(), u.end(), std::greater<double>());
    double css = 0.0, tau = 0.0;
    int rho = 0;
    for (int i = 0; i < n; ++i) {
        css += u[i];
        double trial = (css - 1.0) / (i + 1);
        if (u[i] - trial > 0) {
            rho = i + 1;
            tau = trial;
        }
    }
    (void)rho;
    Vector out(n);
    for (int i = 0; i < n; ++i) out(i) = std::max(0.0, v(i) - tau);
    return out;
}

}  // namespace

HullPoint minimize_over_hull(const VertexSet& D, const Vector& w, const Vector& z, double rho) {
    const int K = D.size();
    if (K < 1) throw Error("hull minimization needs at least one vertex");
    const int p = static_cast<int>(z.size());

    Matrix Y(p, K);
    Vector c(K);
    for (int i = 0; i < K; ++i) {
        Y.col(i) = D.qx(i);
        c(i) = D.fcost(i) + w.dot(D.qx(i));
    }

    HullPoint out;
    if (K == 1) {
        out.theta = Vector::Ones(1);
    } else {
        double lip = rho * Y.squaredNorm();
        if (lip < 1e-14) {
            // Pure linear objective over the simplex: best vertex wins.
            int best = 0;
            for (int i = 1; i < K; ++i)
                if (c(i) < c(best) - 1e-15) best = i;
            out.theta = Vector::Zero(K);
            out.theta(best) = 1.0;
        } else {
            Vector theta = Vector::Constant(K, 1.0 / K);
            const double step = 1.0 / lip;
            bool converged = false;
            for (int it = 0; it < 10000; ++it) {
                Vector resid = Y * theta - z;
                Vector grad = c + rho * (Y.transpose() * resid);
                Vector next = project_simplex(theta - step * grad);
                double pg = (theta - project_simplex(theta - grad)).norm();
                theta = next;
                if (pg <= 1e-8) {
                    converged = true;
                    break;
                }
            }
            out.exact = converged;
            out.theta = theta;
        }
    }

    out.qx = Y * out.theta;
    out.fvalue = 0.0;
    for (int i = 0; i < K; ++i) out.fvalue += out.theta(i) * D.fcost(i);
    Vector resid = out.qx - z;
    out.lagrangian = out.fvalue + w.dot(out.qx) + 0.5 * rho * resid.squaredNorm();

    // Minimality over the hull: never worse than any single vertex.
    double best_vertex = std::numeric_limits<double>::infinity();
    for (int i = 0; i < K; ++i) {
        Vector r = D.qx(i) - z;
        best_vertex = std::min(best_vertex,
                               D.fcost(i) + w.dot(D.qx(i)) + 0.5 * rho * r.squaredNorm());
    }
    if (out.lagrangian > best_vertex + 1e-6 * (1.0 + std::abs(best_vertex)))
        throw ConsistencyError("hull minimizer exceeds a vertex value");
    return out;
}

// ---------------------------------------------------------------------------
// Parallel helper
// ---------------------------------------------------------------------------

void run_parallel(int workers, int n_tasks, const std::function<void(int)>& fn) {
    workers = std::max(1, std::min(workers, n_tasks));
    if (workers <= 1 || n_tasks <= 1) {
        for (int i = 0; i < n_tasks; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(n_tasks);
    std::vector<std::thread> pool;
    for (int wkr = 0; wkr < workers; ++wkr) {
        pool.emplace_back([&]() {
            while (true) {
                int i = next.fetch_add(1);
                if (i >= n_tasks) return;
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    for (int i = 0; i < n_tasks; ++i)
        if (errors[i]) std::rethrow_exception(errors[i]);
}

// ---------------------------------------------------------------------------
// The coordination solver
// ---------------------------------------------------------------------------

DualResult evaluate_dual(const MilpModel& model, const std::vector<int>& selector,
                         const Vector& wplus, const SolverConfig& milp_cfg) {
    MilpModel m = model;
    for (size_t j = 0; j < selector.size(); ++j) m.objective[selector[j]] += wplus(j);
    MilpSolution sol = solve_milp(m, milp_cfg);
    DualResult res;
    if (sol.status == SolveStatus::Optimal) {
        res.phi = sol.objective;
        res.exact = true;
        res.vertex = sol.values;
        double f = model.objective_constant;
        for (int j = 0; j < model.num_vars(); ++j) f += model.objective[j] * sol.values(j);
        res.vertex_cost = f;
    } else if (sol.status == SolveStatus::NodeLimit) {
        res.phi = sol.best_bound;
        res.exact = false;
        if (sol.values.size() > 0) {
            res.vertex = sol.values;
            double f = model.objective_constant;
            for (int j = 0; j < model.num_vars(); ++j) f += model.objective[j] * sol.values(j);
            res.vertex_cost = f;
        }
    } else {
        throw Error("dual evaluation came back " + to_string(sol.status));
    }
    return res;
}

double update_penalty(double rho, double eta, double rho_min, double rho_max) {
    double inv = std::min(std::max({2.0 * (1.0 - eta) / rho, 1.0 / (10.0 * rho), 1.0 / rho_max}),
                          std::min(10.0 / rho, 1.0 / rho_min));
    return 1.0 / inv;
}

double serious_step_eta(double sum_dphi, double sum_eps) {
    return sum_dphi / std::max(sum_eps, 1e-12);
}

AccelDecision accelerate_multipliers(double alpha, double c_k, double c_prev, double delta) {
    AccelDecision d;
    if (c_k < delta * c_prev) {
        d.alpha_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * alpha * alpha));
        d.momentum = (alpha - 1.0) / d.alpha_next;
        d.c_out = c_k;
    } else {
        d.restart = true;
        d.alpha_next = 1.0;
        d.momentum = 0.0;
        d.c_out = c_prev / delta;
    }
    return d;
}

namespace {

struct Handle {
    std::string name;
    int area = -1;  // -1 = backbone
    BuildResult build;
    std::vector<int> selector;
    Vector base_objective;
    double base_constant = 0.0;

    double fcost(const Vector& x) const { return base_constant + base_objective.dot(x); }
    Vector slice(const Vector& x) const {
        Vector s(selector.size());
        for (size_t j = 0; j < selector.size(); ++j) s(j) = x(selector[j]);
        return s;
    }
};

void certify_and_add(VertexSet& D, const Handle& h, const Vector& x) {
    PointEvaluation ev = evaluate_point(h.build.model, x, 1e-6, 1e-6);
    if (!ev.feasible)
        throw ConsistencyError("vertex certification failed for " + h.name +
                               " (violation " + std::to_string(ev.worst_violation) + ")");
    D.add(x, h.fcost(x), h.slice(x));
}

struct PinBackup {
    std::vector<std::pair<int, std::pair<double, double>>> bounds;
};

// Intersects the variable's box with [lo, hi]; an empty intersection is left
// in place so the solve reports infeasibility and the repair ladder escalates.
void pin_variable(MilpModel& m, int var, double lo, double hi) {
    m.vars[var].lb = std::max(m.vars[var].lb, lo);
    m.vars[var].ub = std::min(m.vars[var].ub, hi);
}

void fix_investments(MilpModel& m, const VariableAtlas& atlas, const Vector& x) {
    auto fix = [&](int var) {
        if (var < 0) return;
        double v = std::round(x(var));
        m.vars[var].lb = v;
        m.vars[var].ub = v;
    };
    for (int v : atlas.l) fix(v);
    for (int v : atlas.mtr) fix(v);
    for (int v : atlas.ns) fix(v);
}

}  // namespace

CoordinationResult run_coordination(const PartitionedNetwork& part,
                                    const CoordinationConfig& config_in) {
    CoordinationConfig cfg = config_in;
    const int n_sub = static_cast<int>(part.sub_areas.size());
    const int T = part.original.horizon.stages;

    // ---- build all subproblems ----
    Handle backbone;
    backbone.name = "backbone";
    backbone.build = build_backbone_subproblem(part.backbone);
    std::vector<Handle> subs(n_sub);
    for (int i = 0; i < n_sub; ++i) {
        subs[i].name = "sub-area " + std::to_string(i);
        subs[i].area = i;
        subs[i].build = build_subarea_subproblem(part.sub_areas[i]);
    }
    std::vector<VariableAtlas> sub_atlases;
    for (const Handle& h : subs) sub_atlases.push_back(h.build.atlas);
    Selectors sel = selection_matrices(part, backbone.build.atlas, sub_atlases);
    backbone.selector = sel.backbone;
    for (int i = 0; i < n_sub; ++i) subs[i].selector = sel.sub[i];
    auto cache_obj = [](Handle& h) {
        h.base_objective = Eigen::Map<const Vector>(h.build.model.objective.data(),
                                                    h.build.model.objective.size());
        h.base_constant = h.build.model.objective_constant;
    };
    cache_obj(backbone);
    for (Handle& h : subs) cache_obj(h);

    const int seg = T * kBoundaryQuantities;
    auto sub_segment = [&](const Vector& pair_space, int i) {
        return Vector(pair_space.segment(i * seg, seg));
    };

    CoordinationResult result;
    result.max_subproblem_binaries = backbone.build.model.num_binaries();
    for (const Handle& h : subs)
        result.max_subproblem_binaries = std::max(result.max_subproblem_binaries,
                                                  h.build.model.num_binaries());

    // ---- Step 1-2: initialization ----
    CoordinationState st;
    st.rho = cfg.rho0;
    VertexSet D_b;
    std::vector<VertexSet> D_s(n_sub);

    std::vector<MilpSolution> init(1 + n_sub);
    run_parallel(cfg.workers, 1 + n_sub, [&](int i) {
        const Handle& h = i == 0 ? backbone : subs[i - 1];
        init[i] = solve_milp(h.build.model, cfg.milp);
    });
    for (int i = 0; i <= n_sub; ++i) {
        const Handle& h = i == 0 ? backbone : subs[i - 1];
        if (init[i].status != SolveStatus::Optimal)
            throw InitializationError("initial solve of " + h.name + " is " +
                                      to_string(init[i].status) +
                                      (init[i].infeasibility_hint.empty()
                                           ? ""
                                           : " (" + init[i].infeasibility_hint + ")"));
    }
    certify_and_add(D_b, backbone, init[0].values);
    for (int i = 0; i < n_sub; ++i) certify_and_add(D_s[i], subs[i], init[i + 1].values);

    {
        std::vector<Vector> sub_slices;
        for (int i = 0; i < n_sub; ++i) sub_slices.push_back(D_s[i].qx(0));
        st.z = project_coordination(D_b.qx(0), sub_slices);
    }
    st.w_backbone = Vector::Zero(backbone.selector.size());
    st.what_backbone = st.w_backbone;
    st.w_prev_backbone = st.w_backbone;
    st.w_sub.resize(n_sub);
    st.what_sub.resize(n_sub);
    st.w_prev_sub.resize(n_sub);
    st.phi_lb_sub.resize(n_sub);
    st.phi_lb_backbone = init[0].objective;
    double initial_primal = init[0].objective;
    for (int i = 0; i < n_sub; ++i) {
        st.w_sub[i] = Vector::Zero(seg);
        st.what_sub[i] = st.w_sub[i];
        st.w_prev_sub[i] = st.w_sub[i];
        st.phi_lb_sub[i] = init[i + 1].objective;
        initial_primal += init[i + 1].objective;
    }
    st.eps_tol = cfg.eps_tol > 0 ? cfg.eps_tol : 1e-4 * (1.0 + std::abs(initial_primal));

    // ---- main loop ----
    HullPoint hull_b;
    std::vector<HullPoint> hull_s(n_sub);
    auto incumbent_cost = [&]() {
        auto best_of = [&](const VertexSet& D, const Vector& w) {
            double best = std::numeric_limits<double>::infinity();
            double fbest = 0.0;
            for (int i = 0; i < D.size(); ++i) {
                double v = D.fcost(i) + w.dot(D.qx(i));
                if (v < best - 1e-15) {
                    best = v;
                    fbest = D.fcost(i);
                }
            }
            return fbest;
        };
        double total = best_of(D_b, st.w_backbone);
        for (int i = 0; i < n_sub; ++i) total += best_of(D_s[i], st.w_sub[i]);
        return total;
    };

    for (st.k = 1; st.k <= cfg.k_max; ++st.k) {
        auto t0 = std::chrono::steady_clock::now();

        // Step 4: Gauss-Seidel passes over the hulls, backbone first, then all
        // sub-areas concurrently, then the projection refresh.
        for (int pass = 0; pass < cfg.t_max; ++pass) {
            double al_before = 0.0;
            bool have_before = pass > 0;  // w and rho shift between iterations
            if (have_before) {
                al_before = hull_b.lagrangian;
                for (int i = 0; i < n_sub; ++i) al_before += hull_s[i].lagrangian;
            }
            hull_b = minimize_over_hull(D_b, st.what_backbone, st.z, st.rho);
            run_parallel(cfg.workers, n_sub, [&](int i) {
                hull_s[i] =
                    minimize_over_hull(D_s[i], st.what_sub[i], sub_segment(st.z, i), st.rho);
            });
            double al_after = hull_b.lagrangian;
            for (int i = 0; i < n_sub; ++i) al_after += hull_s[i].lagrangian;
            if (have_before && al_after > al_before + 1e-6 * (1.0 + std::abs(al_before)))
                throw ConsistencyError("augmented Lagrangian rose across a Gauss-Seidel block");
            std::vector<Vector> sub_slices;
            for (int i = 0; i < n_sub; ++i) sub_slices.push_back(hull_s[i].qx);
            st.z = project_coordination(hull_b.qx, sub_slices);
        }

        // Step 5: trial multipliers and dual evaluations.
        Vector resid_b = hull_b.qx - st.z;
        Vector trial_b = st.what_backbone + st.rho * resid_b;
        std::vector<Vector> resid_s(n_sub), trial_s(n_sub);
        for (int i = 0; i < n_sub; ++i) {
            resid_s[i] = hull_s[i].qx - sub_segment(st.z, i);
            trial_s[i] = st.what_sub[i] + st.rho * resid_s[i];
        }
        std::vector<DualResult> duals(1 + n_sub);
        run_parallel(cfg.workers, 1 + n_sub, [&](int i) {
            const Handle& h = i == 0 ? backbone : subs[i - 1];
            duals[i] = evaluate_dual(h.build.model, h.selector,
                                     i == 0 ? trial_b : trial_s[i - 1], cfg.milp);
        });
        if (duals[0].vertex) certify_and_add(D_b, backbone, *duals[0].vertex);
        for (int i = 0; i < n_sub; ++i)
            if (duals[i + 1].vertex) certify_and_add(D_s[i], subs[i], *duals[i + 1].vertex);

        // Gaps against the cutting-plane values (the printed form doubles the
        // quadratic term).
        double phi_hat_b =
            hull_b.fvalue + st.what_backbone.dot(hull_b.qx) + st.rho * resid_b.squaredNorm();
        double eps_b = phi_hat_b - st.phi_lb_backbone;
        double dphi_b = duals[0].phi - st.phi_lb_backbone;
        double sum_eps = eps_b;
        double sum_dphi = dphi_b;
        for (int i = 0; i < n_sub; ++i) {
            double phi_hat =
                hull_s[i].fvalue + st.what_sub[i].dot(hull_s[i].qx) + st.rho * resid_s[i].squaredNorm();
            sum_eps += phi_hat - st.phi_lb_sub[i];
            sum_dphi += duals[i + 1].phi - st.phi_lb_sub[i];
        }

        TraceRow row;
        row.k = st.k;
        row.sum_eps = sum_eps;
        row.rho = st.rho;

        if (sum_eps <= st.eps_tol) {
            st.converged = true;
            row.eta = 1.0;
            row.incumbent_cost = incumbent_cost();
            auto t1 = std::chrono::steady_clock::now();
            row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
            result.trace.rows.push_back(row);
            break;
        }

        // Step 6: serious or null step.
        double eta = serious_step_eta(sum_dphi, sum_eps);
        row.eta = eta;
        bool serious = eta >= cfg.gamma;
        row.serious = serious;
        if (serious) {
            double old_sum_lb = st.phi_lb_backbone;
            for (int i = 0; i < n_sub; ++i) old_sum_lb += st.phi_lb_sub[i];

            st.w_backbone = trial_b;
            st.phi_lb_backbone = duals[0].phi;
            for (int i = 0; i < n_sub; ++i) {
                st.w_sub[i] = trial_s[i];
                st.phi_lb_sub[i] = duals[i + 1].phi;
            }
            double new_sum_lb = st.phi_lb_backbone;
            for (int i = 0; i < n_sub; ++i) new_sum_lb += st.phi_lb_sub[i];
            if (new_sum_lb < old_sum_lb - 1e-7 * (1.0 + std::abs(old_sum_lb)))
                throw ConsistencyError("dual lower bound decreased across a serious step");

            if (cfg.accelerate) {
                // Nesterov update with restart on insufficient residual decay.
                double c_k = resid_b.squaredNorm();
                for (int i = 0; i < n_sub; ++i) c_k += resid_s[i].squaredNorm();
                c_k *= st.rho;  // rho^-1 ||w - what||^2 with w - what = rho*resid
                AccelDecision dec = accelerate_multipliers(st.alpha, c_k, st.c_prev, cfg.delta);
                if (!dec.restart) {
                    st.what_backbone =
                        st.w_backbone + dec.momentum * (st.w_backbone - st.w_prev_backbone);
                    for (int i = 0; i < n_sub; ++i)
                        st.what_sub[i] = st.w_sub[i] + dec.momentum * (st.w_sub[i] - st.w_prev_sub[i]);
                } else {
                    row.restart = true;
                    st.what_backbone = st.w_prev_backbone;
                    for (int i = 0; i < n_sub; ++i) st.what_sub[i] = st.w_prev_sub[i];
                }
                st.alpha = dec.alpha_next;
                st.c_prev = dec.c_out;
            } else {
                st.what_backbone = st.w_backbone;
                for (int i = 0; i < n_sub; ++i) st.what_sub[i] = st.w_sub[i];
            }
            st.w_prev_backbone = st.w_backbone;
            for (int i = 0; i < n_sub; ++i) st.w_prev_sub[i] = st.w_sub[i];
        }

        // Step 7: penalty update, exactly as printed.
        st.rho = update_penalty(st.rho, eta, cfg.rho_min, cfg.rho_max);

        row.incumbent_cost = incumbent_cost();
        auto t1 = std::chrono::steady_clock::now();
        row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        result.trace.rows.push_back(row);
        log_info("coord k=" + std::to_string(st.k) + " sumEps=" + std::to_string(sum_eps) +
                 " eta=" + std::to_string(eta) + " rho=" + std::to_string(st.rho) +
                 (serious ? " serious" : " null"));
    }

    result.converged = st.converged;
    result.iterations = std::min(st.k, cfg.k_max);
    result.final_gap = result.trace.rows.empty() ? 0.0 : result.trace.rows.back().sum_eps;
    result.sum_dual_lb = st.phi_lb_backbone;
    for (int i = 0; i < n_sub; ++i) result.sum_dual_lb += st.phi_lb_sub[i];

    // ---- final plan assembly ----
    // Vertex choice: small candidate lists ranked by f + w'Qx; the sub-area
    // picks decouple once the backbone candidate is fixed.
    auto candidates = [&](const VertexSet& D, const Vector& w) {
        std::vector<int> order(D.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            double va = D.fcost(a) + w.dot(D.qx(a));
            double vb = D.fcost(b) + w.dot(D.qx(b));
            if (va != vb) return va < vb;
            return a < b;
        });
        if (order.size() > 8) order.resize(8);
        return order;
    };
    std::vector<int> cand_b = candidates(D_b, st.w_backbone);
    std::vector<std::vector<int>> cand_s(n_sub);
    for (int i = 0; i < n_sub; ++i) cand_s[i] = candidates(D_s[i], st.w_sub[i]);

    int pick_b = cand_b.front();
    std::vector<int> pick_s(n_sub);
    {
        double best_total = std::numeric_limits<double>::infinity();
        for (int vb : cand_b) {
            double total = D_b.fcost(vb);
            std::vector<int> picks(n_sub);
            for (int i = 0; i < n_sub; ++i) {
                double best_i = std::numeric_limits<double>::infinity();
                for (int vs : cand_s[i]) {
                    Vector diff = D_b.qx(vb).segment(i * seg, seg) - D_s[i].qx(vs);
                    double v = D_s[i].fcost(vs) + 0.5 * st.rho * diff.squaredNorm();
                    if (v < best_i - 1e-15) {
                        best_i = v;
                        picks[i] = vs;
                    }
                }
                total += best_i;
            }
            if (total < best_total - 1e-15) {
                best_total = total;
                pick_b = vb;
                pick_s = picks;
            }
        }
    }

    // Repair ladder: exact pin to z, then a one-percent band, then the
    // sequential stitch off the backbone's actual boundary values.
    auto pin_selector = [&](MilpModel& m, const std::vector<int>& selector, const Vector& target,
                            double band) {
        for (size_t j = 0; j < selector.size(); ++j) {
            double v = target(j);
            double half = band * std::max(1.0, std::abs(v)) + 1e-9;
            pin_variable(m, selector[j], v - half, v + half);
        }
    };

    auto try_rung = [&](int rung) -> std::optional<std::vector<MilpSolution>> {
        std::vector<MilpSolution> sols(1 + n_sub);
        bool ok = true;
        run_parallel(cfg.workers, 1 + n_sub, [&](int i) {
            const Handle& h = i == 0 ? backbone : subs[i - 1];
            MilpModel m = h.build.model;
            fix_investments(m, h.build.atlas, i == 0 ? D_b.vertex(pick_b)
                                                     : D_s[i - 1].vertex(pick_s[i - 1]));
            Vector target = i == 0 ? st.z : sub_segment(st.z, i - 1);
            pin_selector(m, h.selector, target, rung == 0 ? 1e-9 : 0.01);
            sols[i] = solve_milp(m, cfg.milp);
        });
        for (int i = 0; i <= n_sub; ++i)
            if (sols[i].status != SolveStatus::Optimal) ok = false;
        if (!ok) return std::nullopt;
        return sols;
    };

    std::vector<MilpSolution> finals;
    int rung_used = 0;
    for (int rung = 0; rung < 2; ++rung) {
        auto sols = try_rung(rung);
        if (sols) {
            finals = std::move(*sols);
            rung_used = rung;
            break;
        }
    }
    if (finals.empty()) {
        // Sequential stitch: backbone first with the equivalent loads pinned
        // to the true area totals, then the sub-areas against the backbone's
        // actual boundary values.
        rung_used = 2;
        finals.assign(1 + n_sub, MilpSolution{});
        MilpModel mb = backbone.build.model;
        fix_investments(mb, backbone.build.atlas, D_b.vertex(pick_b));
        for (int i = 0; i < n_sub; ++i) {
            for (int t = 1; t <= T; ++t) {
                double area_p = 0.0, area_q = 0.0;
                for (const auto& id : part.original.partition.sub_areas[i].nodes) {
                    const Node& nd = part.original.node(id);
                    area_p += nd.load_p[t - 1];
                    area_q += nd.load_q[t - 1];
                }
                pin_variable(mb, backbone.build.atlas.pd_var(i, t), area_p - 1e-7, area_p + 1e-7);
                pin_variable(mb, backbone.build.atlas.qd_var(i, t), area_q - 1e-7, area_q + 1e-7);
            }
        }
        finals[0] = solve_milp(mb, cfg.milp);
        if (finals[0].status != SolveStatus::Optimal) {
            // Last resort: let the backbone re-plan its investments.
            MilpModel mb2 = backbone.build.model;
            finals[0] = solve_milp(mb2, cfg.milp);
            if (finals[0].status != SolveStatus::Optimal)
                throw Error("final backbone repair failed: " + to_string(finals[0].status));
        }
        Vector actual_b = backbone.slice(finals[0].values);
        run_parallel(cfg.workers, n_sub, [&](int i) {
            auto attempt = [&](bool fix_inv) {
                MilpModel ms = subs[i].build.model;
                if (fix_inv) fix_investments(ms, subs[i].build.atlas, D_s[i].vertex(pick_s[i]));
                Vector target = actual_b.segment(i * seg, seg);
                for (int j = 0; j < seg; ++j) {
                    double v = target(j);
                    double half = 1e-6 * std::max(1.0, std::abs(v)) + 1e-9;
                    pin_variable(ms, subs[i].selector[j], v - half, v + half);
                }
                return solve_milp(ms, cfg.milp);
            };
            finals[i + 1] = attempt(true);
            if (finals[i + 1].status != SolveStatus::Optimal) finals[i + 1] = attempt(false);
            if (finals[i + 1].status != SolveStatus::Optimal)
                throw Error("final repair of " + subs[i].name + " failed: " +
                            to_string(finals[i + 1].status));
        });
    }
    result.repair_rung = rung_used;

    // ---- totals, indices, stitched plan ----
    result.total_cost = 0.0;
    for (int i = 0; i <= n_sub; ++i) result.total_cost += finals[i].objective;

    result.backbone.solution = finals[0];
    result.backbone.indices =
        internal_reliability_indices(backbone.build.atlas, part.backbone.net, finals[0]);
    result.sub.resize(n_sub);
    for (int i = 0; i < n_sub; ++i) {
        result.sub[i].solution = finals[i + 1];
        result.sub[i].indices =
            internal_reliability_indices(subs[i].build.atlas, part.sub_areas[i].net, finals[i + 1]);
    }

    Plan bplan = extract_plan(backbone.build.atlas, part.backbone.net, finals[0]);
    std::vector<Plan> splans;
    for (int i = 0; i < n_sub; ++i)
        splans.push_back(extract_plan(subs[i].build.atlas, part.sub_areas[i].net, finals[i + 1]));

    Plan plan;
    plan.stages = T;
    plan.builds.resize(T);
    plan.normal_closed.resize(T);
    plan.feeder_of.resize(T);
    plan.network_hash = network_hash(part.original);
    auto merge_view = [&](const Plan& vp, const std::vector<int>& orig_branch) {
        for (int t = 0; t < T; ++t) {
            for (const auto& [vb, type] : vp.builds[t].conductors) {
                int ob = orig_branch[vb];
                if (ob >= 0) plan.builds[t].conductors[ob] = type;
            }
            for (const auto& [slot, type] : vp.builds[t].transformers)
                plan.builds[t].transformers[slot] = type;
            for (const auto& s : vp.builds[t].substations)
                if (part.original.node_index(s) >= 0) plan.builds[t].substations.push_back(s);
            for (int vb : vp.normal_closed[t]) {
                int ob = orig_branch[vb];
                if (ob >= 0) plan.normal_closed[t].push_back(ob);
            }
        }
    };
    merge_view(bplan, part.backbone.orig_branch);
    for (int i = 0; i < n_sub; ++i) merge_view(splans[i], part.sub_areas[i].orig_branch);
    for (int t = 0; t < T; ++t) {
        std::sort(plan.normal_closed[t].begin(), plan.normal_closed[t].end());
        plan.feeder_of[t] = feeder_labels(part.original, plan.normal_closed[t], t + 1, plan);
    }
    for (int i = 0; i < n_sub; ++i) {
        Vector bb_slice = backbone.slice(finals[0].values).segment(i * seg, seg);
        const char* names[kBoundaryQuantities] = {"cif", "cid", "p", "q", "s", "u"};
        for (int t = 1; t <= T; ++t)
            for (int qn = 0; qn < kBoundaryQuantities; ++qn)
                plan.boundary_values["s" + std::to_string(i) + ".t" + std::to_string(t) + "." +
                                     names[qn]] = bb_slice((t - 1) * kBoundaryQuantities + qn);
    }
    result.plan = std::move(plan);
    return result;
}

}  // namespace gridplan
