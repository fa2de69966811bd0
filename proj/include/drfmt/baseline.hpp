#pragma once

// Comparison mechanisms: Maximum Nash Welfare through a piecewise-linear
// log approximation, exhaustive integral (Discrete) MNW for tiny instances,
// and welfare metrics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "drfmt/error.hpp"
#include "drfmt/lp.hpp"
#include "drfmt/model.hpp"

namespace drfmt {

// Scalar agent weight used by the Nash objectives: mean over meta-types.
inline double agent_weight(const NormalizedInstance& inst, std::size_t i) {
  double s = 0.0;
  for (std::size_t l = 0; l < inst.num_meta(); ++l) s += inst.weight(i, l);
  return s / static_cast<double>(inst.num_meta());
}

// Utility of agent i with everything it can access.
inline double standalone_max_utility(const NormalizedInstance& inst, std::size_t i) {
  double u = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < inst.num_meta(); ++l) {
    if (!inst.demands(i, l)) continue;
    double s = 0.0;
    for (std::size_t r : inst.groups[i][l]) s += inst.supply[r];
    u = std::min(u, s / inst.demand(i, l));
  }
  return u;
}

inline double social_welfare(const NormalizedInstance& inst, const Allocation& alloc) {
  double sw = 0.0;
  for (double u : utilities(inst, alloc)) sw += u;
  return sw;
}

// (SW(a) - SW(b)) / SW(b); empty when SW(b) is zero.
inline std::optional<double> normalized_sw_diff(double sw_a, double sw_b) {
  if (sw_b == 0.0) return std::nullopt;
  return (sw_a - sw_b) / sw_b;
}

inline std::optional<double> normalized_sw_diff(const NormalizedInstance& inst, const Allocation& a,
                                                const Allocation& b) {
  return normalized_sw_diff(social_welfare(inst, a), social_welfare(inst, b));
}

// Sum of W_i log u_i; -inf if anyone gets nothing.
inline double nash_objective(const NormalizedInstance& inst, const std::vector<double>& u) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!(u[i] > 0.0)) return -std::numeric_limits<double>::infinity();
    s += agent_weight(inst, i) * std::log(u[i]);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Piecewise-linear MNW.

struct MnwConfig {
  std::size_t grid_points = 32;
  double u_floor_fraction = 1e-6;  // of each agent's standalone maximum
  std::size_t floor_retries = 3;
  // Extra solves that add grid_points breakpoints in a window around each
  // agent's previous optimum. Interpolant optima are only pinned down to one
  // segment, so refining tightens the allocation itself. Each window contains
  // the previous bracketing segment, so the objective never decreases.
  std::size_t refine_passes = 4;
};

struct MnwResult {
  Allocation allocation;
  std::vector<double> utilities;  // Leontief utilities of `allocation`
  double pwl_objective = 0.0;     // optimum of the approximating LP
  double nash_objective = 0.0;    // sum W_i log u_i at the returned allocation
  double u_floor_fraction = 0.0;  // floor actually used
};

inline std::vector<double> log_breakpoints(double lo, double hi, std::size_t count) {
  std::vector<double> b(count);
  const double a = std::log(lo), z = std::log(hi);
  for (std::size_t k = 0; k < count; ++k) {
    b[k] = std::exp(a + (z - a) * static_cast<double>(k) / static_cast<double>(count - 1));
  }
  b.front() = lo;
  b.back() = hi;
  return b;
}

// Smallest log-spacing between breakpoints that refinement may introduce.
inline constexpr double kMinLogGap = 1e-5;

namespace detail {

struct PwlSolve {
  bool infeasible = false;
  Allocation allocation;
  std::vector<double> u;
  double objective = 0.0;
};

// Convex-combination form of the interpolant: u_i = sum_k lambda_ik b_ik and
// the objective credits lambda_ik log b_ik. Since log is concave this equals
// the piecewise-linear interpolant, with one column per breakpoint and only
// 1 + L rows per agent.
inline PwlSolve solve_pwl_once(const NormalizedInstance& inst, const std::vector<std::vector<double>>& breaks) {
  const std::size_t n = inst.num_agents();
  const std::size_t m = inst.num_resources();
  lp::LpModel model;
  std::vector<std::vector<std::size_t>> x(n, std::vector<std::size_t>(m, npos));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < m; ++r)
      if (inst.accessible(i, r)) x[i][r] = model.add_variable();
  std::vector<std::vector<std::size_t>> lambda(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = agent_weight(inst, i);
    std::vector<lp::Term> convex;
    for (double b : breaks[i]) {
      lambda[i].push_back(model.add_variable(w * std::log(b)));
      convex.push_back({lambda[i].back(), 1.0});
    }
    model.add_constraint(std::move(convex), lp::Relation::Equal, 1.0);
    for (std::size_t l = 0; l < inst.num_meta(); ++l) {
      if (!inst.demands(i, l)) continue;
      std::vector<lp::Term> terms;
      for (std::size_t k = 0; k < breaks[i].size(); ++k) terms.push_back({lambda[i][k], inst.demand(i, l) * breaks[i][k]});
      for (std::size_t r : inst.groups[i][l]) terms.push_back({x[i][r], -1.0});
      model.add_constraint(std::move(terms), lp::Relation::LessEqual, 0.0);
    }
  }
  for (std::size_t r = 0; r < m; ++r) {
    std::vector<lp::Term> terms;
    for (std::size_t i = 0; i < n; ++i)
      if (x[i][r] != npos) terms.push_back({x[i][r], 1.0});
    if (!terms.empty()) model.add_constraint(std::move(terms), lp::Relation::LessEqual, inst.supply[r]);
  }
  const auto sol = lp::solve(model);
  PwlSolve out;
  if (sol.status == lp::LpStatus::Infeasible) {
    out.infeasible = true;
    return out;
  }
  if (!sol.optimal()) throw NumericalFailure(std::string("MNW LP is ") + lp::to_string(sol.status));
  out.allocation = Allocation::zeros(inst);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < m; ++r)
      if (x[i][r] != npos) out.allocation.x(i, r) = std::max(0.0, sol.primal[x[i][r]]);
  out.u.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < breaks[i].size(); ++k) out.u[i] += breaks[i][k] * sol.primal[lambda[i][k]];
  out.objective = sol.objective_value;
  return out;
}

// Base grid plus `count` log-spaced points within `width` (log units) of v.
inline std::vector<double> refined_breakpoints(const std::vector<double>& base, double v, double width,
                                               std::size_t count) {
  std::vector<double> b = base;
  const double lo = std::max(base.front(), v * std::exp(-width));
  const double hi = std::min(base.back(), v * std::exp(width));
  if (hi > lo) {
    for (double p : log_breakpoints(lo, hi, count)) b.push_back(p);
  }
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end(), [](double a, double c) { return c - a <= 1e-12 * c; }), b.end());
  return b;
}

}  // namespace detail

inline MnwResult solve_mnw_pwl(const NormalizedInstance& inst, const MnwConfig& cfg = {}) {
  if (cfg.grid_points < 8) throw std::invalid_argument("solve_mnw_pwl: grid_points must be >= 8");
  if (!(cfg.u_floor_fraction > 0.0)) throw std::invalid_argument("solve_mnw_pwl: u_floor must be positive");
  const std::size_t n = inst.num_agents();
  double fraction = cfg.u_floor_fraction;

  for (std::size_t attempt = 0; attempt <= cfg.floor_retries; ++attempt, fraction /= 10.0) {
    std::vector<std::vector<double>> base(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double u_max = standalone_max_utility(inst, i);
      base[i] = log_breakpoints(fraction * u_max, u_max, cfg.grid_points);
    }
    auto pass = detail::solve_pwl_once(inst, base);
    if (pass.infeasible) continue;
    double gap = std::log(1.0 / fraction) / static_cast<double>(cfg.grid_points - 1);
    for (std::size_t k = 0; k < cfg.refine_passes; ++k) {
      // Two gaps either side of the current optimum. Near-duplicate columns
      // make the tableau drift, so stop at a minimum spacing.
      const double next_gap = 4.0 * gap / static_cast<double>(cfg.grid_points - 1);
      if (next_gap < kMinLogGap) break;
      std::vector<std::vector<double>> breaks(n);
      for (std::size_t i = 0; i < n; ++i) breaks[i] = detail::refined_breakpoints(base[i], pass.u[i], 2.0 * gap, cfg.grid_points);
      auto next = detail::solve_pwl_once(inst, breaks);
      if (next.infeasible) throw NumericalFailure("MNW refinement LP became infeasible");
      pass = std::move(next);
      gap = next_gap;
    }

    MnwResult out;
    out.allocation = std::move(pass.allocation);
    out.utilities = utilities(inst, out.allocation);
    out.pwl_objective = pass.objective;
    out.nash_objective = nash_objective(inst, out.utilities);
    out.u_floor_fraction = fraction;
    return out;
  }
  throw NumericalFailure("MNW LP infeasible even after lowering the utility floor");
}

// ---------------------------------------------------------------------------
// Exhaustive Discrete MNW.

struct DiscreteMnwResult {
  Allocation allocation;  // with units
  std::vector<double> utilities;
  std::size_t positive = 0;  // agents with positive utility
  double nash_objective = 0.0;  // over the positive agents
  std::uint64_t leaves = 0;
};

inline double binomial(std::uint64_t n, std::uint64_t k) {
  double c = 1.0;
  for (std::uint64_t j = 1; j <= k; ++j) c = c * static_cast<double>(n - k + j) / static_cast<double>(j);
  return c;
}

// Leaves the exhaustive search would visit: per resource, the ways to split
// its full supply among the agents that can use it.
inline double discrete_mnw_nodes(const NormalizedInstance& inst) {
  double nodes = 1.0;
  for (std::size_t r = 0; r < inst.num_resources(); ++r) {
    std::uint64_t k = 0;
    for (std::size_t i = 0; i < inst.num_agents(); ++i) k += inst.accessible(i, r);
    if (k == 0) continue;
    const auto u = static_cast<std::uint64_t>(inst.raw_supply[r]);
    nodes *= binomial(u + k - 1, k - 1);
  }
  return nodes;
}

inline constexpr double kDiscreteMnwNodeLimit = 1e7;

// Integral allocation maximizing first the number of agents with positive
// utility, then sum W_i log u_i among them. Every unit is handed out (more
// never hurts a Leontief agent); ties keep the first allocation found.
inline DiscreteMnwResult solve_discrete_mnw_exhaustive(const NormalizedInstance& inst,
                                                       std::int64_t unit_cap = 12) {
  const std::size_t n = inst.num_agents();
  const std::size_t m = inst.num_resources();
  for (std::size_t r = 0; r < m; ++r) {
    if (inst.raw_supply[r] > unit_cap) {
      throw InstanceTooLarge("resource " + inst.resource_ids[r] + " has " + std::to_string(inst.raw_supply[r]) +
                             " units, cap is " + std::to_string(unit_cap));
    }
  }
  const double nodes = discrete_mnw_nodes(inst);
  if (nodes > kDiscreteMnwNodeLimit) {
    throw InstanceTooLarge("exhaustive search needs " + std::to_string(nodes) + " leaves");
  }

  std::vector<std::vector<std::size_t>> holders(m);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t i = 0; i < n; ++i)
      if (inst.accessible(i, r)) holders[r].push_back(i);
  std::vector<double> weight(n);
  for (std::size_t i = 0; i < n; ++i) weight[i] = agent_weight(inst, i);

  std::vector<std::vector<std::int64_t>> units(n, std::vector<std::int64_t>(m, 0));
  Matrix held(n, inst.num_meta());  // units in each demanded group
  DiscreteMnwResult best;
  best.positive = 0;
  best.nash_objective = -std::numeric_limits<double>::infinity();
  bool have_best = false;
  std::vector<std::vector<std::int64_t>> best_units = units;

  auto evaluate = [&] {
    ++best.leaves;
    std::size_t positive = 0;
    double obj = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double u = std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < inst.num_meta(); ++l)
        if (inst.demands(i, l)) u = std::min(u, held(i, l) / inst.raw_demand(i, l));
      if (u > 0.0) {
        ++positive;
        obj += weight[i] * std::log(u);
      }
    }
    if (!have_best || positive > best.positive || (positive == best.positive && obj > best.nash_objective)) {
      have_best = true;
      best.positive = positive;
      best.nash_objective = obj;
      best_units = units;
    }
  };

  // Distributes resource r's units over holders[r][h..].
  auto split = [&](auto& self, std::size_t r, std::size_t h, std::int64_t left) -> void {
    if (r == m) {
      evaluate();
      return;
    }
    const auto& hs = holders[r];
    if (hs.empty()) {
      self(self, r + 1, 0, r + 1 < m ? inst.raw_supply[r + 1] : 0);
      return;
    }
    const std::size_t i = hs[h];
    const std::size_t l = inst.meta_of[r];
    if (h + 1 == hs.size()) {
      units[i][r] = left;
      held(i, l) += static_cast<double>(left);
      self(self, r + 1, 0, r + 1 < m ? inst.raw_supply[r + 1] : 0);
      held(i, l) -= static_cast<double>(left);
      units[i][r] = 0;
      return;
    }
    for (std::int64_t give = left; give >= 0; --give) {
      units[i][r] = give;
      held(i, l) += static_cast<double>(give);
      self(self, r, h + 1, left - give);
      held(i, l) -= static_cast<double>(give);
    }
    units[i][r] = 0;
  };
  split(split, 0, 0, m > 0 ? inst.raw_supply[0] : 0);

  best.allocation = from_units(inst, best_units);
  best.utilities = utilities(inst, best.allocation);
  return best;
}

}  // namespace drfmt
