#include "simplex.hpp"

#include "gridplan/logging.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace gridplan::detail {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPivotTol = 1e-9;
constexpr double kDualTol = 1e-9;
constexpr double kDegenerateStep = 1e-11;
constexpr int kBlandTrigger = 40;
constexpr int kRefactorInterval = 64;
}  // namespace

// ---------------------------------------------------------------------------
// Presolve
// ---------------------------------------------------------------------------

Vector PresolveResult::lift(const Vector& reduced_x, int n_orig) const {
    Vector full(n_orig);
    for (int j = 0; j < n_orig; ++j) full(j) = is_fixed[j] ? fixed_value[j] : 0.0;
    for (size_t k = 0; k < kept_vars.size(); ++k) full(kept_vars[k]) = reduced_x(static_cast<int>(k));
    return full;
}

PresolveResult presolve_model(const MilpModel& model, bool integral, double feas_tol) {
    const int n = model.num_vars();
    const int mr = model.num_rows();

    PresolveResult res;
    res.fixed_value.assign(n, 0.0);
    res.is_fixed.assign(n, 0);

    std::vector<double> lb(n), ub(n);
    for (int j = 0; j < n; ++j) {
        lb[j] = model.vars[j].lb;
        ub[j] = model.vars[j].ub;
    }
    std::vector<char> row_live(mr, 1);

    auto integral_tighten = [&](int j) {
        if (!integral || model.vars[j].type != VarType::Binary) return;
        if (lb[j] > 1e-7 && lb[j] < 1.0) lb[j] = 1.0;
        if (ub[j] < 1.0 - 1e-7 && ub[j] > 0.0) ub[j] = 0.0;
    };

    auto mark_infeasible = [&](const std::string& hint) {
        res.infeasible = true;
        res.infeasible_hint = hint;
    };

    for (int j = 0; j < n && !res.infeasible; ++j) {
        integral_tighten(j);
        if (lb[j] > ub[j] + feas_tol) mark_infeasible("bounds: " + model.vars[j].name);
    }

    bool changed = true;
    int guard = 0;
    while (changed && !res.infeasible && guard++ < 60) {
        changed = false;
        for (int r = 0; r < mr; ++r) {
            if (!row_live[r]) continue;
            const MilpRow& row = model.rows[r];

            double min_act = 0.0, max_act = 0.0;
            int n_unfixed = 0;
            int last_unfixed = -1;
            double fixed_part = 0.0;
            for (size_t k = 0; k < row.idx.size(); ++k) {
                int j = row.idx[k];
                double a = row.coef[k];
                if (a == 0.0) continue;
                if (res.is_fixed[j]) {
                    fixed_part += a * res.fixed_value[j];
                    continue;
                }
                ++n_unfixed;
                last_unfixed = static_cast<int>(k);
                if (a > 0) {
                    min_act += a * lb[j];
                    max_act += a * ub[j];
                } else {
                    min_act += a * ub[j];
                    max_act += a * lb[j];
                }
            }
            min_act += fixed_part;
            max_act += fixed_part;

            const double slack_eps = feas_tol * (1.0 + std::abs(row.rhs));

            if (n_unfixed == 0) {
                bool ok = true;
                switch (row.sense) {
                    case RowSense::LE: ok = fixed_part <= row.rhs + slack_eps; break;
                    case RowSense::GE: ok = fixed_part >= row.rhs - slack_eps; break;
                    case RowSense::EQ: ok = std::abs(fixed_part - row.rhs) <= slack_eps; break;
                }
                if (!ok) {
                    mark_infeasible(row.name);
                    break;
                }
                row_live[r] = 0;
                changed = true;
                continue;
            }

            if (row.sense == RowSense::LE || row.sense == RowSense::EQ) {
                if (min_act > row.rhs + slack_eps) {
                    mark_infeasible(row.name);
                    break;
                }
            }
            if (row.sense == RowSense::GE || row.sense == RowSense::EQ) {
                if (max_act < row.rhs - slack_eps) {
                    mark_infeasible(row.name);
                    break;
                }
            }
            bool redundant = false;
            switch (row.sense) {
                case RowSense::LE: redundant = max_act <= row.rhs + slack_eps; break;
                case RowSense::GE: redundant = min_act >= row.rhs - slack_eps; break;
                case RowSense::EQ:
                    redundant = std::abs(max_act - row.rhs) <= slack_eps &&
                                std::abs(min_act - row.rhs) <= slack_eps;
                    break;
            }
            if (redundant) {
                row_live[r] = 0;
                changed = true;
                continue;
            }

            // Forcing rows pin every unfixed variable to an extreme bound.
            bool force_min = (row.sense != RowSense::GE) && min_act >= row.rhs - slack_eps;
            bool force_max = (row.sense != RowSense::LE) && max_act <= row.rhs + slack_eps;
            if (force_min || force_max) {
                bool all_finite = true;
                for (size_t k = 0; k < row.idx.size(); ++k) {
                    int j = row.idx[k];
                    double a = row.coef[k];
                    if (a == 0.0 || res.is_fixed[j]) continue;
                    double v;
                    if (force_min)
                        v = a > 0 ? lb[j] : ub[j];
                    else
                        v = a > 0 ? ub[j] : lb[j];
                    if (!std::isfinite(v)) {
                        all_finite = false;
                        break;
                    }
                }
                if (all_finite) {
                    for (size_t k = 0; k < row.idx.size(); ++k) {
                        int j = row.idx[k];
                        double a = row.coef[k];
                        if (a == 0.0 || res.is_fixed[j]) continue;
                        double v = force_min ? (a > 0 ? lb[j] : ub[j]) : (a > 0 ? ub[j] : lb[j]);
                        res.is_fixed[j] = 1;
                        res.fixed_value[j] = v;
                        lb[j] = ub[j] = v;
                    }
                    row_live[r] = 0;
                    changed = true;
                    continue;
                }
            }

            // Singleton rows become bounds.
            if (n_unfixed == 1) {
                int j = row.idx[last_unfixed];
                double a = row.coef[last_unfixed];
                double target = (row.rhs - fixed_part) / a;
                bool upper = (row.sense == RowSense::LE) == (a > 0);
                if (row.sense == RowSense::EQ) {
                    if (target < lb[j] - feas_tol || target > ub[j] + feas_tol) {
                        mark_infeasible(row.name);
                        break;
                    }
                    lb[j] = ub[j] = target;
                } else if (upper) {
                    if (target < ub[j]) ub[j] = target;
                } else {
                    if (target > lb[j]) lb[j] = target;
                }
                integral_tighten(j);
                if (lb[j] > ub[j] + feas_tol) {
                    mark_infeasible(row.name);
                    break;
                }
                row_live[r] = 0;
                changed = true;
                continue;
            }
        }

        if (!res.infeasible) {
            for (int j = 0; j < n; ++j) {
                if (res.is_fixed[j]) continue;
                if (ub[j] - lb[j] <= 1e-12 && std::isfinite(lb[j])) {
                    res.is_fixed[j] = 1;
                    res.fixed_value[j] = 0.5 * (lb[j] + ub[j]);
                    changed = true;
                }
            }
        }
    }

    if (res.infeasible) return res;

    std::vector<int> new_index(n, -1);
    for (int j = 0; j < n; ++j) {
        if (res.is_fixed[j]) {
            res.objective_shift += model.objective[j] * res.fixed_value[j];
            continue;
        }
        new_index[j] = static_cast<int>(res.kept_vars.size());
        res.kept_vars.push_back(j);
    }

    res.reduced.module_tag = model.module_tag;
    res.reduced.objective_constant = model.objective_constant + res.objective_shift;
    for (int j : res.kept_vars) {
        MilpVar v = model.vars[j];
        v.lb = lb[j];
        v.ub = ub[j];
        res.reduced.vars.push_back(v);
        res.reduced.objective.push_back(model.objective[j]);
    }
    for (int r = 0; r < mr; ++r) {
        if (!row_live[r]) continue;
        const MilpRow& row = model.rows[r];
        MilpRow out;
        out.name = row.name;
        out.sense = row.sense;
        out.rhs = row.rhs;
        for (size_t k = 0; k < row.idx.size(); ++k) {
            int j = row.idx[k];
            if (row.coef[k] == 0.0) continue;
            if (res.is_fixed[j]) {
                out.rhs -= row.coef[k] * res.fixed_value[j];
                continue;
            }
            out.idx.push_back(new_index[j]);
            out.coef.push_back(row.coef[k]);
        }
        if (out.idx.empty()) continue;
        res.reduced.rows.push_back(std::move(out));
    }
    return res;
}

// ---------------------------------------------------------------------------
// BoundedSimplex
// ---------------------------------------------------------------------------

BoundedSimplex::BoundedSimplex(const MilpModel& rm, double feas_tol)
    : m_(rm.num_rows()), n_(rm.num_vars()), feas_tol_(feas_tol) {
    std::vector<Eigen::Triplet<double>> trips;
    b_.resize(m_);
    slack_lb_.resize(m_);
    slack_ub_.resize(m_);
    row_names_.reserve(m_);
    for (int r = 0; r < m_; ++r) {
        const MilpRow& row = rm.rows[r];
        for (size_t k = 0; k < row.idx.size(); ++k)
            trips.emplace_back(r, row.idx[k], row.coef[k]);
        b_(r) = row.rhs;
        switch (row.sense) {
            case RowSense::LE:
                slack_lb_(r) = 0.0;
                slack_ub_(r) = kInf;
                break;
            case RowSense::GE:
                slack_lb_(r) = -kInf;
                slack_ub_(r) = 0.0;
                break;
            case RowSense::EQ:
                slack_lb_(r) = 0.0;
                slack_ub_(r) = 0.0;
                break;
        }
        row_names_.push_back(row.name);
    }
    A_.resize(m_, n_);
    A_.setFromTriplets(trips.begin(), trips.end());
    A_.makeCompressed();
    At_ = A_.transpose();
    At_.makeCompressed();
    c_.resize(n_);
    for (int j = 0; j < n_; ++j) c_(j) = rm.objective[j];
    c0_ = rm.objective_constant;
    reset_basis();
}

void BoundedSimplex::reset_basis() {
    basic_.resize(m_);
    status_.assign(n_ + m_, VarStatus::AtLower);
    for (int r = 0; r < m_; ++r) {
        basic_[r] = n_ + r;
        status_[n_ + r] = VarStatus::Basic;
    }
    etas_.clear();
    lu_ready_ = false;
}

Vector BoundedSimplex::column_dense(int j) const {
    Vector col = Vector::Zero(m_);
    if (j < n_) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(A_, j); it; ++it)
            col(it.row()) += it.value();
    } else {
        col(j - n_) = 1.0;
    }
    return col;
}

void BoundedSimplex::refactorize() {
    etas_.clear();
    if (m_ == 0) {
        lu_ready_ = true;
        return;
    }
    std::vector<Eigen::Triplet<double>> trips;
    bool identity = true;
    for (int r = 0; r < m_; ++r) {
        int j = basic_[r];
        if (j != n_ + r) identity = false;
        if (j < n_) {
            for (Eigen::SparseMatrix<double>::InnerIterator it(A_, j); it; ++it)
                trips.emplace_back(it.row(), r, it.value());
        } else {
            trips.emplace_back(j - n_, r, 1.0);
        }
    }
    (void)identity;
    Eigen::SparseMatrix<double> B(m_, m_);
    B.setFromTriplets(trips.begin(), trips.end());
    B.makeCompressed();
    lu_.compute(B);
    if (lu_.info() != Eigen::Success)
        throw SolverError("basis factorization failed (singular basis)");
    lu_ready_ = true;
}

Vector BoundedSimplex::ftran(const Vector& rhs) const {
    if (m_ == 0) return Vector(0);
    Vector x = lu_.solve(rhs);
    for (const Eta& e : etas_) {
        double f = x(e.r) / e.wr;
        if (f != 0.0) {
            x -= f * e.w;
            x(e.r) += f;  // the e_r component of the eta transform
        }
    }
    return x;
}

Vector BoundedSimplex::btran(const Vector& rhs) const {
    if (m_ == 0) return Vector(0);
    Vector y = rhs;
    for (auto it = etas_.rbegin(); it != etas_.rend(); ++it) {
        double s = (it->w.dot(y) - y(it->r)) / it->wr;
        y(it->r) -= s;
    }
    return lu_.transpose().solve(y);
}

void BoundedSimplex::recompute_basics() {
    if (m_ == 0) return;
    Vector rhs = b_;
    for (int j = 0; j < n_ + m_; ++j) {
        if (status_[j] == VarStatus::Basic) continue;
        double v = x_(j);
        if (v == 0.0) continue;
        if (j < n_) {
            for (Eigen::SparseMatrix<double>::InnerIterator it(A_, j); it; ++it)
                rhs(it.row()) -= it.value() * v;
        } else {
            rhs(j - n_) -= v;
        }
    }
    Vector xb = ftran(rhs);
    for (int r = 0; r < m_; ++r) x_(basic_[r]) = xb(r);
}

double BoundedSimplex::infeasibility_sum() const {
    double s = 0.0;
    for (int r = 0; r < m_; ++r) {
        int j = basic_[r];
        if (x_(j) < lb_(j)) s += lb_(j) - x_(j);
        if (x_(j) > ub_(j)) s += x_(j) - ub_(j);
    }
    return s;
}

Vector BoundedSimplex::basic_costs(bool phase1) const {
    Vector cb(m_);
    for (int r = 0; r < m_; ++r) {
        int j = basic_[r];
        if (phase1) {
            if (x_(j) < lb_(j) - feas_tol_)
                cb(r) = -1.0;
            else if (x_(j) > ub_(j) + feas_tol_)
                cb(r) = 1.0;
            else
                cb(r) = 0.0;
        } else {
            cb(r) = j < n_ ? c_(j) : 0.0;
        }
    }
    return cb;
}

bool BoundedSimplex::price_and_pivot(bool phase1, bool bland, bool& progressed,
                                     bool& unbounded_hit) {
    progressed = false;
    unbounded_hit = false;

    Vector y = m_ > 0 ? btran(basic_costs(phase1)) : Vector(0);
    Vector d_struct(n_);
    if (m_ > 0)
        d_struct = (phase1 ? Vector(Vector::Zero(n_)) : c_) - At_ * y;
    else
        d_struct = phase1 ? Vector(Vector::Zero(n_)) : c_;

    auto reduced_cost = [&](int j) { return j < n_ ? d_struct(j) : -y(j - n_); };

    int enter = -1;
    double best_score = kDualTol;
    int sigma = +1;
    for (int j = 0; j < n_ + m_; ++j) {
        VarStatus st = status_[j];
        if (st == VarStatus::Basic) continue;
        double d = reduced_cost(j);
        double score = 0.0;
        int dir = 0;
        if (st == VarStatus::AtLower && d < -kDualTol) {
            score = -d;
            dir = +1;
        } else if (st == VarStatus::AtUpper && d > kDualTol) {
            score = d;
            dir = -1;
        } else if (st == VarStatus::FreeZero && std::abs(d) > kDualTol) {
            score = std::abs(d);
            dir = d < 0 ? +1 : -1;
        } else {
            continue;
        }
        if (bland) {
            enter = j;
            sigma = dir;
            break;
        }
        if (score > best_score) {
            best_score = score;
            enter = j;
            sigma = dir;
        }
    }
    if (enter < 0) return false;

    Vector w = ftran(column_dense(enter));

    // Ratio test: the entering variable moves by sigma * t, basic position r
    // by -sigma * w_r * t. Out-of-bounds basics (phase 1) block when they
    // reach the violated bound; in-bounds basics block at the bound they
    // approach.
    double theta = kInf;
    int leave_pos = -1;
    VarStatus leave_to = VarStatus::AtLower;
    int leave_col = n_ + m_;

    double own_range = ub_(enter) - lb_(enter);
    if (std::isfinite(own_range)) theta = own_range;

    for (int r = 0; r < m_; ++r) {
        double rate = -sigma * w(r);
        if (std::abs(rate) <= kPivotTol) continue;
        int j = basic_[r];
        double t = kInf;
        VarStatus to = VarStatus::AtLower;
        if (rate > 0) {  // rising
            double target;
            if (x_(j) < lb_(j) - feas_tol_) {
                target = lb_(j);
                to = VarStatus::AtLower;
            } else if (x_(j) <= ub_(j) + feas_tol_ && std::isfinite(ub_(j))) {
                target = ub_(j);
                to = VarStatus::AtUpper;
            } else {
                continue;
            }
            t = (target - x_(j)) / rate;
        } else {  // falling
            double target;
            if (x_(j) > ub_(j) + feas_tol_) {
                target = ub_(j);
                to = VarStatus::AtUpper;
            } else if (x_(j) >= lb_(j) - feas_tol_ && std::isfinite(lb_(j))) {
                target = lb_(j);
                to = VarStatus::AtLower;
            } else {
                continue;
            }
            t = (target - x_(j)) / rate;
        }
        if (t < -1e-12) t = 0.0;
        if (t < theta - 1e-12 || (t < theta + 1e-12 && j < leave_col)) {
            theta = t;
            leave_pos = r;
            leave_to = to;
            leave_col = j;
        }
    }

    if (!std::isfinite(theta)) {
        unbounded_hit = true;
        return true;
    }

    theta = std::max(theta, 0.0);

    x_(enter) += sigma * theta;
    if (theta > 0.0)
        for (int r = 0; r < m_; ++r) x_(basic_[r]) -= sigma * theta * w(r);

    if (leave_pos < 0) {
        status_[enter] =
            status_[enter] == VarStatus::AtLower ? VarStatus::AtUpper : VarStatus::AtLower;
        x_(enter) = status_[enter] == VarStatus::AtUpper ? ub_(enter) : lb_(enter);
    } else {
        int out = basic_[leave_pos];
        double piv = w(leave_pos);
        if (std::abs(piv) < kPivotTol) {
            refactorize();
            recompute_basics();
            progressed = true;
            return true;
        }
        status_[out] = leave_to;
        x_(out) = leave_to == VarStatus::AtLower ? lb_(out) : ub_(out);
        status_[enter] = VarStatus::Basic;
        basic_[leave_pos] = enter;
        etas_.push_back({leave_pos, piv, std::move(w)});
        if (static_cast<int>(etas_.size()) >= kRefactorInterval) {
            refactorize();
            recompute_basics();
        }
    }

    progressed = theta > kDegenerateStep;
    return true;
}

SimplexOutcome BoundedSimplex::solve(const Vector& lb, const Vector& ub) {
    SimplexOutcome out;
    lb_.resize(n_ + m_);
    ub_.resize(n_ + m_);
    lb_.head(n_) = lb;
    ub_.head(n_) = ub;
    lb_.tail(m_) = slack_lb_;
    ub_.tail(m_) = slack_ub_;

    x_ = Vector::Zero(n_ + m_);
    for (int j = 0; j < n_ + m_; ++j) {
        if (status_[j] == VarStatus::Basic) continue;
        if (!std::isfinite(lb_(j)) && !std::isfinite(ub_(j))) {
            status_[j] = VarStatus::FreeZero;
            x_(j) = 0.0;
        } else if (status_[j] == VarStatus::AtUpper && std::isfinite(ub_(j))) {
            x_(j) = ub_(j);
        } else if (std::isfinite(lb_(j))) {
            status_[j] = VarStatus::AtLower;
            x_(j) = lb_(j);
        } else {
            status_[j] = VarStatus::AtUpper;
            x_(j) = ub_(j);
        }
    }
    if (!lu_ready_) refactorize();
    recompute_basics();

    const long soft_cap = 5000 + 60L * (m_ + n_);
    const long hard_cap = 4 * soft_cap + 40000;
    long iters = 0;
    int degenerate_streak = 0;
    bool bland = false;
    bool restarted = false;
    const double feas_scale = 1.0 + (m_ > 0 ? b_.cwiseAbs().sum() : 0.0);
    const double feas_eps = feas_tol_ * feas_scale;

    // Unified composite loop: the phase is re-derived from the current basic
    // infeasibility, so phase-1 repairs that erode mid-stream are re-entered
    // automatically.
    while (true) {
        bool phase1 = infeasibility_sum() > feas_eps;
        bool progressed = false, unbounded = false;
        bool moved = price_and_pivot(phase1, bland, progressed, unbounded);
        ++iters;
        if (!moved) {
            if (!phase1) break;  // optimal
            // Rule out numerical artifacts before declaring infeasibility.
            refactorize();
            recompute_basics();
            if (infeasibility_sum() <= feas_eps) continue;
            bool p2 = false, u2 = false;
            if (price_and_pivot(true, bland, p2, u2)) continue;
            out.status = LpStatus::Infeasible;
            double worst = 0.0;
            for (int r = 0; r < m_; ++r) {
                int j = basic_[r];
                double v = std::max(lb_(j) - x_(j), x_(j) - ub_(j));
                if (v > worst && j >= n_) {
                    worst = v;
                    out.blocking_hint = row_names_[j - n_];
                }
            }
            if (out.blocking_hint.empty()) out.blocking_hint = "bounds";
            out.x = x_;
            out.iterations = iters;
            return out;
        }
        if (unbounded) {
            if (phase1) {
                // A phase-1 ray means stale numerics, never true unboundedness.
                refactorize();
                recompute_basics();
                continue;
            }
            out.status = LpStatus::Unbounded;
            out.x = x_;
            out.iterations = iters;
            return out;
        }
        degenerate_streak = progressed ? 0 : degenerate_streak + 1;
        if (!bland && degenerate_streak > kBlandTrigger) {
            bland = true;
            refactorize();  // clean numerics before index-order pivoting
            recompute_basics();
        }
        if (bland && progressed) bland = false;

        if (iters == soft_cap && !restarted) {
            // Warm starts occasionally wander; restart cold once.
            restarted = true;
            reset_basis();
            refactorize();
            x_ = Vector::Zero(n_ + m_);
            for (int j = 0; j < n_ + m_; ++j) {
                if (status_[j] == VarStatus::Basic) continue;
                if (!std::isfinite(lb_(j)) && !std::isfinite(ub_(j)))
                    x_(j) = 0.0;
                else if (status_[j] == VarStatus::AtUpper && std::isfinite(ub_(j)))
                    x_(j) = ub_(j);
                else if (std::isfinite(lb_(j))) {
                    status_[j] = VarStatus::AtLower;
                    x_(j) = lb_(j);
                } else {
                    status_[j] = VarStatus::AtUpper;
                    x_(j) = ub_(j);
                }
            }
            recompute_basics();
            degenerate_streak = 0;
            bland = false;
            continue;
        }
        if (iters > hard_cap)
            throw SolverError("simplex iteration cap exceeded after " + std::to_string(iters) +
                              " iterations (m=" + std::to_string(m_) + ", n=" + std::to_string(n_) +
                              ", infeasibility=" + std::to_string(infeasibility_sum()) + ")");
    }

    refactorize();
    recompute_basics();
    if (infeasibility_sum() > feas_eps) {
        // Feasibility eroded exactly at optimality; one more repair pass.
        bool p = false, u = false;
        long guard = 0;
        while (infeasibility_sum() > feas_eps && guard++ < m_ + n_ + 100) {
            if (!price_and_pivot(true, false, p, u)) break;
            ++iters;
        }
    }
    out.status = LpStatus::Optimal;
    out.x = x_;
    out.objective = c0_ + (n_ > 0 ? c_.dot(x_.head(n_)) : 0.0);
    out.iterations = iters;
    return out;
}

}  // namespace gridplan::detail
