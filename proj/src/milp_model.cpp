#include "gridplan/milp.hpp"

#include <cmath>
#include <limits>
#include <ostream>

namespace gridplan {

int MilpModel::add_var(const std::string& name, double lb, double ub, VarType type) {
    vars.push_back({name, lb, ub, type});
    objective.push_back(0.0);
    return static_cast<int>(vars.size()) - 1;
}

void MilpModel::add_row(MilpRow row) {
    rows.push_back(std::move(row));
}

void MilpModel::set_objective(int var, double coef) {
    objective.at(var) = coef;
}

void MilpModel::add_objective(int var, double coef) {
    objective.at(var) += coef;
}

int MilpModel::num_binaries() const {
    int k = 0;
    for (const auto& v : vars)
        if (v.type == VarType::Binary) ++k;
    return k;
}

void MilpModel::check_well_formed() const {
    if (objective.size() != vars.size()) throw Error("objective size does not match variable count");
    for (size_t j = 0; j < vars.size(); ++j) {
        const auto& v = vars[j];
        if (v.lb > v.ub + 1e-12)
            throw Error("variable " + v.name + " has empty bound interval");
        if (v.type == VarType::Binary) {
            if (!std::isfinite(v.lb) || !std::isfinite(v.ub))
                throw Error("binary variable " + v.name + " must have finite bounds");
            if (v.lb < -1e-9 || v.ub > 1.0 + 1e-9)
                throw Error("binary variable " + v.name + " has bounds outside [0,1]");
        }
    }
    for (const auto& r : rows) {
        if (r.idx.size() != r.coef.size()) throw Error("row " + r.name + " has mismatched index/coef arrays");
        for (int j : r.idx)
            if (j < 0 || j >= num_vars()) throw Error("row " + r.name + " references undeclared variable");
    }
}

std::string to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Optimal: return "optimal";
        case SolveStatus::Infeasible: return "infeasible";
        case SolveStatus::Unbounded: return "unbounded";
        case SolveStatus::NodeLimit: return "node-limit";
    }
    return "?";
}

PointEvaluation evaluate_point(const MilpModel& model, const Vector& point,
                               double feas_tol, double int_tol) {
    if (point.size() != model.num_vars())
        throw Error("point dimension does not match model");
    PointEvaluation ev;
    for (const auto& r : model.rows) {
        double act = 0.0;
        for (size_t k = 0; k < r.idx.size(); ++k) act += r.coef[k] * point(r.idx[k]);
        double viol = 0.0;
        switch (r.sense) {
            case RowSense::LE: viol = act - r.rhs; break;
            case RowSense::GE: viol = r.rhs - act; break;
            case RowSense::EQ: viol = std::abs(act - r.rhs); break;
        }
        ev.max_constraint_violation = std::max(ev.max_constraint_violation, viol);
    }
    for (int j = 0; j < model.num_vars(); ++j) {
        const auto& v = model.vars[j];
        double viol = std::max(v.lb - point(j), point(j) - v.ub);
        ev.max_bound_violation = std::max(ev.max_bound_violation, viol);
        if (v.type == VarType::Binary)
            ev.max_integrality_violation =
                std::max(ev.max_integrality_violation, std::abs(point(j) - std::round(point(j))));
    }
    ev.worst_violation = std::max({ev.max_constraint_violation, ev.max_bound_violation, 0.0});
    ev.feasible = ev.max_constraint_violation <= feas_tol && ev.max_bound_violation <= feas_tol &&
                  ev.max_integrality_violation <= int_tol;
    double obj = model.objective_constant;
    for (int j = 0; j < model.num_vars(); ++j) obj += model.objective[j] * point(j);
    ev.objective = obj;
    return ev;
}

namespace {

std::string lp_var_name(const MilpModel& m, int j) {
    return "x_" + m.module_tag + "_" + m.vars[j].name;
}

void write_term(std::ostream& out, double coef, const std::string& name, bool first) {
    if (coef >= 0)
        out << (first ? "" : " ") << "+ " << coef << " " << name;
    else
        out << (first ? "" : " ") << "- " << -coef << " " << name;
}

}  // namespace

void write_lp_format(const MilpModel& model, std::ostream& out) {
    out << "\\ " << model.module_tag << "\n";
    out << "Minimize\n obj:";
    bool any = false;
    for (int j = 0; j < model.num_vars(); ++j) {
        if (model.objective[j] == 0.0) continue;
        out << " ";
        write_term(out, model.objective[j], lp_var_name(model, j), !any);
        any = true;
    }
    if (!any) out << " 0 " << (model.num_vars() > 0 ? lp_var_name(model, 0) : "x_none");
    out << "\nSubject To\n";
    for (size_t r = 0; r < model.rows.size(); ++r) {
        const auto& row = model.rows[r];
        out << " c" << r << ":";
        for (size_t k = 0; k < row.idx.size(); ++k) {
            out << " ";
            write_term(out, row.coef[k], lp_var_name(model, row.idx[k]), k == 0);
        }
        const char* rel = row.sense == RowSense::LE ? "<=" : (row.sense == RowSense::GE ? ">=" : "=");
        out << " " << rel << " " << row.rhs << "\n";
    }
    out << "Bounds\n";
    for (int j = 0; j < model.num_vars(); ++j) {
        const auto& v = model.vars[j];
        const std::string name = lp_var_name(model, j);
        bool lb_inf = !std::isfinite(v.lb);
        bool ub_inf = !std::isfinite(v.ub);
        if (lb_inf && ub_inf)
            out << " " << name << " free\n";
        else if (lb_inf)
            out << " -inf <= " << name << " <= " << v.ub << "\n";
        else if (ub_inf)
            out << " " << v.lb << " <= " << name << "\n";
        else
            out << " " << v.lb << " <= " << name << " <= " << v.ub << "\n";
    }
    bool any_bin = false;
    for (const auto& v : model.vars)
        if (v.type == VarType::Binary) any_bin = true;
    if (any_bin) {
        out << "Binaries\n";
        for (int j = 0; j < model.num_vars(); ++j)
            if (model.vars[j].type == VarType::Binary) out << " " << lp_var_name(model, j) << "\n";
    }
    out << "End\n";
}

}  // namespace gridplan
