#pragma once

// Dense two-phase primal simplex with dual extraction.
//
// Problems are stated as
//
//     maximize    c'x
//     subject to  a_k'x  (<= | >= | =)  b_k     for every constraint k
//                 lb <= x <= ub                  (ub optional)
//
// Internally every variable is shifted by its lower bound, rows with a
// negative right-hand side are negated, and each row receives a slack,
// surplus or artificial column. The dual of every caller constraint is
// read off the final objective row, so duals are exact basis duals.
//
// Dual sign convention (maximization): y_k >= 0 for <= rows, y_k <= 0 for
// >= rows, free for = rows. Reduced costs c_j - y'A_j are <= 0 at optimum.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "drfmt/error.hpp"

namespace drfmt::lp {

inline constexpr double kPivotTolerance = 1e-9;
inline constexpr double kFeasibilityTolerance = 1e-7;
inline constexpr double kOptimalityTolerance = 1e-9;
inline constexpr double kDropTolerance = 1e-14;
inline constexpr double kHarrisTolerance = 1e-9;

enum class Relation { LessEqual, GreaterEqual, Equal };

struct Term {
  std::size_t var;
  double coef;
};

struct Constraint {
  std::vector<Term> terms;
  Relation relation = Relation::LessEqual;
  double rhs = 0.0;
  std::uint64_t tag = 0;
};

struct LpModel {
  std::vector<double> objective;  // maximize
  std::vector<double> lower;
  std::vector<std::optional<double>> upper;
  std::vector<Constraint> constraints;

  std::size_t num_vars() const { return objective.size(); }
  std::size_t num_constraints() const { return constraints.size(); }

  std::size_t add_variable(double obj = 0.0, double lb = 0.0,
                           std::optional<double> ub = std::nullopt) {
    objective.push_back(obj);
    lower.push_back(lb);
    upper.push_back(ub);
    return objective.size() - 1;
  }

  std::size_t add_constraint(std::vector<Term> terms, Relation rel, double rhs,
                             std::uint64_t tag = 0) {
    constraints.push_back(Constraint{std::move(terms), rel, rhs, tag});
    return constraints.size() - 1;
  }
};

enum class LpStatus { Optimal, Infeasible, Unbounded };

inline const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::Optimal: return "optimal";
    case LpStatus::Infeasible: return "infeasible";
    case LpStatus::Unbounded: return "unbounded";
  }
  return "?";
}

struct LpSolution {
  LpStatus status = LpStatus::Infeasible;
  double objective_value = 0.0;
  std::vector<double> primal;
  std::vector<double> duals;        // one per caller constraint
  std::vector<double> upper_duals;  // one per variable; 0 when no upper bound
  std::vector<double> reduced_costs;
  std::vector<std::size_t> basis;   // tableau column ids of basic variables
  std::size_t iterations = 0;

  bool optimal() const { return status == LpStatus::Optimal; }
};

struct KktReport {
  double primal = 0.0;
  double dual = 0.0;
  double complementarity = 0.0;
  double duality_gap = 0.0;
  double dual_objective = 0.0;

  double max() const { return std::max({primal, dual, complementarity}); }
};

namespace detail {

inline void check_model(const LpModel& model) {
  const std::size_t n = model.num_vars();
  if (model.lower.size() != n || model.upper.size() != n) {
    throw std::invalid_argument("lp: bound vectors do not match variable count");
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (!std::isfinite(model.objective[j]) || !std::isfinite(model.lower[j])) {
      throw std::invalid_argument("lp: non-finite objective or lower bound at var " +
                                  std::to_string(j));
    }
    if (model.upper[j] && std::isnan(*model.upper[j])) {
      throw std::invalid_argument("lp: NaN upper bound at var " + std::to_string(j));
    }
  }
  for (std::size_t k = 0; k < model.constraints.size(); ++k) {
    const auto& c = model.constraints[k];
    if (!std::isfinite(c.rhs)) {
      throw std::invalid_argument("lp: non-finite rhs in constraint " + std::to_string(k));
    }
    for (const auto& t : c.terms) {
      if (t.var >= n) {
        throw std::invalid_argument("lp: constraint " + std::to_string(k) +
                                    " references unknown variable " + std::to_string(t.var));
      }
      if (!std::isfinite(t.coef)) {
        throw std::invalid_argument("lp: non-finite coefficient in constraint " +
                                    std::to_string(k));
      }
    }
  }
}

enum class ColumnKind : std::uint8_t { Structural, Slack, Surplus, Artificial };

class Tableau {
 public:
  Tableau(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), width_(cols + 1), data_(rows * (cols + 1), 0.0),
        obj_(cols + 1, 0.0) {}

  double& at(std::size_t i, std::size_t j) { return data_[i * width_ + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * width_ + j]; }
  double& rhs(std::size_t i) { return data_[i * width_ + cols_]; }
  double rhs(std::size_t i) const { return data_[i * width_ + cols_]; }
  double& obj(std::size_t j) { return obj_[j]; }
  double obj(std::size_t j) const { return obj_[j]; }
  double& obj_value() { return obj_[cols_]; }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  void pivot(std::size_t p, std::size_t q) {
    double* prow = &data_[p * width_];
    const double inv = 1.0 / prow[q];
    nz_.clear();
    for (std::size_t k = 0; k < width_; ++k) {
      if (prow[k] != 0.0) {
        prow[k] *= inv;
        if (std::abs(prow[k]) < kDropTolerance) {
          prow[k] = 0.0;
        } else {
          nz_.push_back(k);
        }
      }
    }
    prow[q] = 1.0;
    for (std::size_t i = 0; i < rows_; ++i) {
      if (i == p) continue;
      double* row = &data_[i * width_];
      eliminate(row, prow, q);
    }
    eliminate(obj_.data(), prow, q);
  }

 private:
  void eliminate(double* row, const double* prow, std::size_t q) {
    const double f = row[q];
    if (f == 0.0) return;
    for (std::size_t k : nz_) {
      double v = row[k] - f * prow[k];
      row[k] = std::abs(v) < kDropTolerance ? 0.0 : v;
    }
    row[q] = 0.0;
  }

  std::size_t rows_;
  std::size_t cols_;
  std::size_t width_;
  std::vector<double> data_;
  std::vector<double> obj_;
  std::vector<std::size_t> nz_;
};

struct Standardized {
  Tableau tab;
  std::vector<ColumnKind> kind;
  std::vector<std::size_t> basis;
  std::vector<std::size_t> identity_col;  // per row: column that started as e_i
  std::vector<double> row_sign;           // -1 when the row was negated
  std::size_t n_struct = 0;
  std::size_t n_caller_rows = 0;
  std::vector<std::size_t> ub_var;        // per upper-bound row: variable index
};

inline Standardized standardize(const LpModel& model) {
  const std::size_t n = model.num_vars();
  struct Row {
    std::vector<Term> terms;
    Relation rel;
    double rhs;
  };
  std::vector<Row> rows;
  rows.reserve(model.constraints.size() + n);
  for (const auto& c : model.constraints) {
    double rhs = c.rhs;
    for (const auto& t : c.terms) rhs -= t.coef * model.lower[t.var];
    rows.push_back(Row{c.terms, c.relation, rhs});
  }
  std::vector<std::size_t> ub_var;
  for (std::size_t j = 0; j < n; ++j) {
    if (model.upper[j] && std::isfinite(*model.upper[j])) {
      rows.push_back(Row{{Term{j, 1.0}}, Relation::LessEqual, *model.upper[j] - model.lower[j]});
      ub_var.push_back(j);
    }
  }

  const std::size_t m = rows.size();
  std::vector<double> sign(m, 1.0);
  std::size_t extra = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (rows[i].rhs < 0.0) {
      sign[i] = -1.0;
      rows[i].rhs = -rows[i].rhs;
      for (auto& t : rows[i].terms) t.coef = -t.coef;
      if (rows[i].rel == Relation::LessEqual) {
        rows[i].rel = Relation::GreaterEqual;
      } else if (rows[i].rel == Relation::GreaterEqual) {
        rows[i].rel = Relation::LessEqual;
      }
    }
    extra += rows[i].rel == Relation::GreaterEqual ? 2 : 1;
  }

  Standardized s{Tableau(m, n + extra), {}, {}, {}, sign, n, model.constraints.size(), ub_var};
  s.kind.assign(n + extra, ColumnKind::Structural);
  s.basis.resize(m);
  s.identity_col.resize(m);
  std::size_t col = n;
  for (std::size_t i = 0; i < m; ++i) {
    for (const auto& t : rows[i].terms) s.tab.at(i, t.var) += t.coef;
    s.tab.rhs(i) = rows[i].rhs;
    switch (rows[i].rel) {
      case Relation::LessEqual:
        s.kind[col] = ColumnKind::Slack;
        s.tab.at(i, col) = 1.0;
        s.identity_col[i] = col;
        s.basis[i] = col++;
        break;
      case Relation::GreaterEqual:
        s.kind[col] = ColumnKind::Surplus;
        s.tab.at(i, col++) = -1.0;
        [[fallthrough]];
      case Relation::Equal:
        s.kind[col] = ColumnKind::Artificial;
        s.tab.at(i, col) = 1.0;
        s.identity_col[i] = col;
        s.basis[i] = col++;
        break;
    }
  }
  return s;
}

class SimplexRun {
 public:
  SimplexRun(Standardized& s, std::size_t cap) : s_(s), cap_(cap) {}

  // Loads objective `cost` (maximize) into the objective row as
  // r_j = c_B B^-1 A_j - c_j.
  void load_objective(const std::vector<double>& cost) {
    auto& tab = s_.tab;
    for (std::size_t j = 0; j <= tab.cols(); ++j) tab.obj(j) = 0.0;
    for (std::size_t j = 0; j < tab.cols(); ++j) tab.obj(j) = -cost[j];
    for (std::size_t i = 0; i < tab.rows(); ++i) {
      const double cb = cost[s_.basis[i]];
      if (cb == 0.0) continue;
      for (std::size_t j = 0; j <= tab.cols(); ++j) {
        const double v = tab.at(i, j);
        if (v != 0.0) tab.obj(j) += cb * v;
      }
    }
  }

  // Returns false when the objective is unbounded.
  bool optimize(const std::vector<bool>& barred) {
    auto& tab = s_.tab;
    const std::size_t stall_limit = 5 * (tab.rows() + tab.cols());
    std::size_t stall = 0;
    double last = tab.obj_value();
    for (;;) {
      const bool bland = stall >= stall_limit;
      std::size_t q = tab.cols();
      double best = -kOptimalityTolerance;
      for (std::size_t j = 0; j < tab.cols(); ++j) {
        if (barred[j]) continue;
        const double r = tab.obj(j);
        if (r < best) {
          q = j;
          if (bland) break;
          best = r;
        }
      }
      if (q == tab.cols()) return true;

      // Two-pass ratio test: the first pass finds the step allowed when every
      // row may go slightly negative, the second takes the largest pivot
      // element among rows blocking within that step. Bland's rule takes the
      // smallest basic index instead.
      double bound = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < tab.rows(); ++i) {
        const double a = tab.at(i, q);
        if (a <= kPivotTolerance) continue;
        bound = std::min(bound, (std::max(tab.rhs(i), 0.0) + kHarrisTolerance) / a);
      }
      std::size_t p = tab.rows();
      for (std::size_t i = 0; i < tab.rows(); ++i) {
        const double a = tab.at(i, q);
        if (a <= kPivotTolerance) continue;
        if (std::max(tab.rhs(i), 0.0) / a > bound) continue;
        if (p == tab.rows()) {
          p = i;
        } else if (bland ? s_.basis[i] < s_.basis[p] : a > tab.at(p, q)) {
          p = i;
        }
      }
      if (p == tab.rows()) return false;

      if (++iterations_ > cap_) {
        throw NumericalFailure("lp: iteration cap of " + std::to_string(cap_) +
                               " pivots exceeded");
      }
      tab.pivot(p, q);
      s_.basis[p] = q;
      const double now = tab.obj_value();
      if (now > last + 1e-12 * std::max(1.0, std::abs(last))) {
        stall = 0;
        last = now;
      } else {
        ++stall;
      }
    }
  }

  std::size_t iterations() const { return iterations_; }

 private:
  Standardized& s_;
  std::size_t cap_;
  std::size_t iterations_ = 0;
};

}  // namespace detail

inline LpSolution solve(const LpModel& model) {
  detail::check_model(model);
  const std::size_t n = model.num_vars();
  LpSolution out;

  for (std::size_t j = 0; j < n; ++j) {
    if (model.upper[j] && *model.upper[j] < model.lower[j] - kFeasibilityTolerance) {
      out.status = LpStatus::Infeasible;
      return out;
    }
  }

  auto s = detail::standardize(model);
  auto& tab = s.tab;
  const std::size_t cols = tab.cols();
  const std::size_t cap = 50 * (n + model.num_constraints() + s.ub_var.size()) + 50;
  detail::SimplexRun run(s, cap);

  bool has_artificial = false;
  std::vector<bool> barred(cols, false);
  for (std::size_t j = 0; j < cols; ++j) {
    if (s.kind[j] == detail::ColumnKind::Artificial) {
      has_artificial = true;
      barred[j] = true;
    }
  }

  if (has_artificial) {
    std::vector<double> phase1(cols, 0.0);
    for (std::size_t j = 0; j < cols; ++j) {
      if (s.kind[j] == detail::ColumnKind::Artificial) phase1[j] = -1.0;
    }
    run.load_objective(phase1);
    std::vector<bool> open(cols, false);
    run.optimize(open);
    double infeas = 0.0;
    for (std::size_t i = 0; i < tab.rows(); ++i) {
      if (s.kind[s.basis[i]] == detail::ColumnKind::Artificial) infeas += std::max(tab.rhs(i), 0.0);
    }
    if (infeas > kFeasibilityTolerance) {
      out.status = LpStatus::Infeasible;
      out.iterations = run.iterations();
      return out;
    }
    // Drive remaining artificials out of the basis where possible.
    for (std::size_t i = 0; i < tab.rows(); ++i) {
      if (s.kind[s.basis[i]] != detail::ColumnKind::Artificial) continue;
      std::size_t q = cols;
      double best = kPivotTolerance;
      for (std::size_t j = 0; j < cols; ++j) {
        if (s.kind[j] == detail::ColumnKind::Artificial) continue;
        if (std::abs(tab.at(i, j)) > best) {
          best = std::abs(tab.at(i, j));
          q = j;
        }
      }
      if (q != cols) {
        tab.pivot(i, q);
        s.basis[i] = q;
      }
    }
  }

  std::vector<double> phase2(cols, 0.0);
  for (std::size_t j = 0; j < n; ++j) phase2[j] = model.objective[j];
  run.load_objective(phase2);
  const bool bounded = run.optimize(barred);
  out.iterations = run.iterations();
  if (!bounded) {
    out.status = LpStatus::Unbounded;
    return out;
  }

  out.status = LpStatus::Optimal;
  out.primal.assign(model.lower.begin(), model.lower.end());
  for (std::size_t i = 0; i < tab.rows(); ++i) {
    if (s.basis[i] < n) out.primal[s.basis[i]] += tab.rhs(i);
  }
  out.objective_value = 0.0;
  for (std::size_t j = 0; j < n; ++j) out.objective_value += model.objective[j] * out.primal[j];

  // Tableau drift on ill-conditioned rows shows up as a violated constraint.
  for (const auto& c : model.constraints) {
    double lhs = 0.0, scale = 1.0 + std::abs(c.rhs);
    for (const auto& t : c.terms) {
      lhs += t.coef * out.primal[t.var];
      scale += std::abs(t.coef * out.primal[t.var]);
    }
    const double viol = c.relation == Relation::LessEqual      ? lhs - c.rhs
                        : c.relation == Relation::GreaterEqual ? c.rhs - lhs
                                                               : std::abs(lhs - c.rhs);
    if (viol > 1e-6 * scale) {
      throw NumericalFailure("lp: optimal basis violates a constraint by " + std::to_string(viol));
    }
  }

  const std::size_t m = tab.rows();
  std::vector<double> row_dual(m);
  for (std::size_t i = 0; i < m; ++i) row_dual[i] = s.row_sign[i] * tab.obj(s.identity_col[i]);
  out.duals.assign(row_dual.begin(), row_dual.begin() + static_cast<std::ptrdiff_t>(s.n_caller_rows));
  out.upper_duals.assign(n, 0.0);
  for (std::size_t k = 0; k < s.ub_var.size(); ++k) {
    out.upper_duals[s.ub_var[k]] = row_dual[s.n_caller_rows + k];
  }
  out.reduced_costs.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) out.reduced_costs[j] = -tab.obj(j);
  out.basis = s.basis;
  return out;
}

// Primal/dual/complementarity residuals of a claimed optimal solution.
inline KktReport check_kkt(const LpModel& model, const LpSolution& sol) {
  KktReport rep;
  const std::size_t n = model.num_vars();
  if (sol.primal.size() != n || sol.duals.size() != model.num_constraints()) {
    throw std::invalid_argument("check_kkt: solution does not match model dimensions");
  }
  std::vector<double> upper_duals = sol.upper_duals;
  upper_duals.resize(n, 0.0);

  // c_j - sum_k y_k a_kj - mu_j = -nu_j with nu_j >= 0 (lower-bound multiplier)
  std::vector<double> reduced(model.objective);
  double dual_obj = 0.0;
  for (std::size_t k = 0; k < model.num_constraints(); ++k) {
    const auto& c = model.constraints[k];
    const double y = sol.duals[k];
    double lhs = 0.0;
    for (const auto& t : c.terms) {
      lhs += t.coef * sol.primal[t.var];
      reduced[t.var] -= y * t.coef;
    }
    double viol = 0.0;
    double sign_viol = 0.0;
    switch (c.relation) {
      case Relation::LessEqual:
        viol = lhs - c.rhs;
        sign_viol = -y;
        break;
      case Relation::GreaterEqual:
        viol = c.rhs - lhs;
        sign_viol = y;
        break;
      case Relation::Equal:
        viol = std::abs(lhs - c.rhs);
        break;
    }
    rep.primal = std::max(rep.primal, viol);
    rep.dual = std::max(rep.dual, sign_viol);
    rep.complementarity = std::max(rep.complementarity, std::abs(y * (c.rhs - lhs)));
    dual_obj += y * c.rhs;
  }
  for (std::size_t j = 0; j < n; ++j) {
    const double x = sol.primal[j];
    rep.primal = std::max(rep.primal, model.lower[j] - x);
    if (model.upper[j]) {
      const double ub = *model.upper[j];
      rep.primal = std::max(rep.primal, x - ub);
      rep.dual = std::max(rep.dual, -upper_duals[j]);
      rep.complementarity = std::max(rep.complementarity, std::abs(upper_duals[j] * (ub - x)));
      reduced[j] -= upper_duals[j];
      dual_obj += upper_duals[j] * ub;
    }
    rep.dual = std::max(rep.dual, reduced[j]);
    rep.complementarity = std::max(rep.complementarity, std::abs(reduced[j] * (x - model.lower[j])));
    dual_obj += reduced[j] * model.lower[j];
  }
  double primal_obj = 0.0;
  for (std::size_t j = 0; j < n; ++j) primal_obj += model.objective[j] * sol.primal[j];
  rep.dual_objective = dual_obj;
  rep.duality_gap = std::abs(dual_obj - primal_obj);
  return rep;
}

// Plain-text dump of the caller-facing constraint system: `coef... | rel rhs`.
inline void dump(const LpModel& model, std::ostream& os) {
  const std::size_t n = model.num_vars();
  os << "max";
  for (double c : model.objective) os << ' ' << c;
  os << '\n';
  std::vector<double> row(n);
  for (const auto& c : model.constraints) {
    std::fill(row.begin(), row.end(), 0.0);
    for (const auto& t : c.terms) row[t.var] += t.coef;
    for (double v : row) os << v << ' ';
    os << "| " << (c.relation == Relation::LessEqual ? "<=" : c.relation == Relation::GreaterEqual ? ">=" : "=")
       << ' ' << c.rhs << '\n';
  }
}

}  // namespace drfmt::lp
