#pragma once

// DRF-MT: the round-based LP mechanism.
//
// Round t maximizes y subject to
//   active i, demanded l:      y * c_il - sum_{r in g_l^i} x_ir <= 0
//   eliminated i, demanded l:  sum_{r in g_l^i} x_ir >= gamma_i * c_il
//   every resource r:          sum_i x_ir <= S_r
// with c_il = w_i* d_il / d_i*. Agents having a demanded group whose
// constraint is tight on every optimal solution are eliminated with
// gamma_i = y*_t. Once everyone is eliminated a last LP fixes the allocation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "drfmt/error.hpp"
#include "drfmt/instance_json.hpp"
#include "drfmt/lp.hpp"
#include "drfmt/model.hpp"

namespace drfmt {

inline constexpr double kDualThreshold = 1e-7;
inline constexpr double kSlackTightness = 1e-6;
inline constexpr double kMonotoneTolerance = 1e-9;
inline constexpr double kFaceRelaxation = 1e-9;
inline constexpr double kRoundingGuard = 1e-7;

enum class Variant { Standard, Alternative };

// Which stage of elimination detection found the agent.
enum class DetectionPath { Dual, Auxiliary };

inline const char* to_string(DetectionPath p) {
  return p == DetectionPath::Dual ? "dual" : "auxiliary";
}

struct MechanismOptions {
  Variant variant = Variant::Standard;
  bool trace = false;        // record shadow prices and eliminated resources
  bool cross_check = false;  // confirm dual-flagged agents with a slack LP
  bool batched_aux = true;   // aggregate the slack LPs; false = one LP per group
};

struct EliminatedAgent {
  std::size_t agent = 0;
  std::size_t meta = 0;  // witnessing demand group
  DetectionPath path = DetectionPath::Dual;
};

struct ShadowPrice {
  std::size_t agent = 0;
  std::size_t meta = 0;
  double value = 0.0;
};

struct RoundRecord {
  std::size_t t = 0;
  double y_star = 0.0;
  std::vector<EliminatedAgent> eliminated;
  std::vector<ShadowPrice> shadow_prices;
  std::optional<std::vector<std::size_t>> eliminated_resources;
  std::size_t lps_solved = 0;
};

struct MechanismResult {
  std::vector<double> gamma;
  Allocation fractional;
  std::vector<RoundRecord> rounds;
  std::vector<double> utilities;
  Variant variant = Variant::Standard;
};

// ---------------------------------------------------------------------------
// Round LP construction.

enum class RowKind : std::uint64_t { Active = 1, Eliminated = 2, Supply = 3, Auxiliary = 4 };

inline std::uint64_t make_tag(RowKind kind, std::size_t agent, std::size_t index) {
  return (static_cast<std::uint64_t>(kind) << 56) | (static_cast<std::uint64_t>(agent) << 24) |
         static_cast<std::uint64_t>(index);
}

inline RowKind tag_kind(std::uint64_t tag) { return static_cast<RowKind>(tag >> 56); }
inline std::size_t tag_agent(std::uint64_t tag) { return (tag >> 24) & 0xffffffffULL; }
inline std::size_t tag_index(std::uint64_t tag) { return tag & 0xffffffULL; }

struct RoundLp {
  lp::LpModel model;
  std::size_t y_var = npos;                       // npos in the final solve
  std::vector<std::vector<std::size_t>> x_var;    // [agent][resource]
  std::vector<std::vector<std::size_t>> alloc_row;  // [agent][meta]
  std::vector<std::size_t> supply_row;            // [resource]
  Matrix coef;                                    // y / gamma coefficient per (agent, meta)
};

// c_il, scaled by the group's supply share under the alternative variant.
inline double constraint_coefficient(const NormalizedInstance& inst, std::size_t i, std::size_t l,
                                     Variant variant) {
  double c = inst.share_coefficient(i, l);
  if (variant == Variant::Alternative) {
    double group_supply = 0.0;
    for (std::size_t r : inst.groups[i][l]) group_supply += inst.supply[r];
    c *= group_supply;
  }
  return c;
}

// With no active agent the LP has no y; it then minimizes total allocation,
// which keeps every eliminated constraint tight.
inline RoundLp build_round_lp(const NormalizedInstance& inst, const std::vector<bool>& active,
                              const std::vector<std::optional<double>>& gamma,
                              Variant variant = Variant::Standard) {
  const std::size_t n = inst.num_agents();
  const std::size_t m = inst.num_resources();
  const std::size_t L = inst.num_meta();
  if (active.size() != n || gamma.size() != n) {
    throw std::invalid_argument("build_round_lp: active/gamma size mismatch");
  }
  const bool any_active = std::find(active.begin(), active.end(), true) != active.end();

  RoundLp out;
  out.x_var.assign(n, std::vector<std::size_t>(m, npos));
  out.alloc_row.assign(n, std::vector<std::size_t>(L, npos));
  out.supply_row.assign(m, npos);
  out.coef = Matrix(n, L);

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < L; ++l) {
      for (std::size_t r : inst.groups[i][l]) {
        out.x_var[i][r] = out.model.add_variable(any_active ? 0.0 : -1.0);
      }
    }
  }
  if (any_active) out.y_var = out.model.add_variable(1.0);

  for (std::size_t i = 0; i < n; ++i) {
    if (!active[i] && !gamma[i]) {
      throw std::invalid_argument("build_round_lp: eliminated agent without gamma");
    }
    for (std::size_t l = 0; l < L; ++l) {
      if (!inst.demands(i, l)) continue;
      const double c = constraint_coefficient(inst, i, l, variant);
      out.coef(i, l) = c;
      std::vector<lp::Term> terms;
      for (std::size_t r : inst.groups[i][l]) terms.push_back({out.x_var[i][r], active[i] ? -1.0 : 1.0});
      if (active[i]) {
        terms.push_back({out.y_var, c});
        out.alloc_row[i][l] = out.model.add_constraint(std::move(terms), lp::Relation::LessEqual, 0.0,
                                                       make_tag(RowKind::Active, i, l));
      } else {
        out.alloc_row[i][l] = out.model.add_constraint(std::move(terms), lp::Relation::GreaterEqual,
                                                       *gamma[i] * c,
                                                       make_tag(RowKind::Eliminated, i, l));
      }
    }
  }
  for (std::size_t r = 0; r < m; ++r) {
    std::vector<lp::Term> terms;
    for (std::size_t i = 0; i < n; ++i) {
      if (out.x_var[i][r] != npos) terms.push_back({out.x_var[i][r], 1.0});
    }
    out.supply_row[r] = out.model.add_constraint(std::move(terms), lp::Relation::LessEqual,
                                                 inst.supply[r], make_tag(RowKind::Supply, 0, r));
  }
  return out;
}

inline double group_sum(const NormalizedInstance& inst, const RoundLp& rlp,
                        const std::vector<double>& primal, std::size_t i, std::size_t l) {
  double s = 0.0;
  for (std::size_t r : inst.groups[i][l]) s += primal[rlp.x_var[i][r]];
  return s;
}

// Slack of an active agent's allocation row at a primal point.
inline double active_slack(const NormalizedInstance& inst, const RoundLp& rlp,
                           const std::vector<double>& primal, std::size_t i, std::size_t l) {
  return group_sum(inst, rlp, primal, i, l) - primal[rlp.y_var] * rlp.coef(i, l);
}

inline Allocation allocation_from_primal(const NormalizedInstance& inst, const RoundLp& rlp,
                                         const std::vector<double>& primal) {
  auto alloc = Allocation::zeros(inst);
  for (std::size_t i = 0; i < inst.num_agents(); ++i) {
    for (std::size_t r = 0; r < inst.num_resources(); ++r) {
      if (rlp.x_var[i][r] != npos) alloc.x(i, r) = std::max(0.0, primal[rlp.x_var[i][r]]);
    }
  }
  return alloc;
}

// ---------------------------------------------------------------------------
// Elimination detection.

namespace detail {

inline lp::LpSolution solve_or_throw(const lp::LpModel& model, const char* what) {
  auto sol = lp::solve(model);
  if (!sol.optimal()) {
    throw NumericalFailure(std::string(what) + " LP is " + lp::to_string(sol.status));
  }
  return sol;
}

// The round model restricted to its optimal face, objective cleared.
inline lp::LpModel optimal_face(const RoundLp& rlp, double y_star) {
  lp::LpModel face = rlp.model;
  std::fill(face.objective.begin(), face.objective.end(), 0.0);
  face.lower[rlp.y_var] = y_star - kFaceRelaxation * std::max(1.0, std::abs(y_star));
  return face;
}

struct GroupRef {
  std::size_t agent;
  std::size_t meta;
};

// Largest slack of one allocation row over the optimal face.
inline double max_group_slack(const NormalizedInstance& inst, const RoundLp& rlp,
                              const lp::LpModel& face, GroupRef g, std::size_t& counter) {
  lp::LpModel aux = face;
  for (std::size_t r : inst.groups[g.agent][g.meta]) aux.objective[rlp.x_var[g.agent][r]] = 1.0;
  aux.objective[rlp.y_var] = -rlp.coef(g.agent, g.meta);
  ++counter;
  return solve_or_throw(aux, "slack").objective_value;
}

// Adds t_k <= slack_k columns for the given groups; returns the t columns.
inline std::vector<std::size_t> add_slack_columns(const NormalizedInstance& inst, const RoundLp& rlp,
                                                  lp::LpModel& model, const std::vector<GroupRef>& groups,
                                                  std::optional<double> cap) {
  std::vector<std::size_t> cols;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    const auto& g = groups[k];
    const std::size_t t = model.add_variable(1.0, 0.0, cap);
    std::vector<lp::Term> terms{{t, 1.0}, {rlp.y_var, rlp.coef(g.agent, g.meta)}};
    for (std::size_t r : inst.groups[g.agent][g.meta]) terms.push_back({rlp.x_var[g.agent][r], -1.0});
    model.add_constraint(std::move(terms), lp::Relation::LessEqual, 0.0,
                         make_tag(RowKind::Auxiliary, g.agent, g.meta));
    cols.push_back(t);
  }
  return cols;
}

// Decides which candidate groups are tight on the whole optimal face.
// Equivalent to one max-slack LP per group: a group is exonerated only by
// exhibiting a face point where its slack exceeds the tightness threshold,
// and the remainder is certified tight by a sum-of-slacks bound.
inline std::vector<bool> tight_groups(const NormalizedInstance& inst, const RoundLp& rlp,
                                      const lp::LpModel& face, const std::vector<double>& incumbent,
                                      const std::vector<GroupRef>& candidates, bool batched,
                                      std::size_t& counter) {
  std::vector<bool> tight(candidates.size(), false);
  std::vector<bool> decided(candidates.size(), false);
  auto exonerate_from = [&](const std::vector<double>& primal) {
    bool progress = false;
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      if (decided[k]) continue;
      if (active_slack(inst, rlp, primal, candidates[k].agent, candidates[k].meta) > kSlackTightness) {
        decided[k] = true;
        progress = true;
      }
    }
    return progress;
  };
  auto undecided = [&] {
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < candidates.size(); ++k)
      if (!decided[k]) idx.push_back(k);
    return idx;
  };

  exonerate_from(incumbent);
  if (batched) {
    constexpr double kCap = 1e-4;
    for (;;) {
      auto open = undecided();
      if (open.empty()) return tight;
      std::vector<GroupRef> groups;
      for (std::size_t k : open) groups.push_back(candidates[k]);
      lp::LpModel capped = face;
      add_slack_columns(inst, rlp, capped, groups, kCap);
      ++counter;
      auto sol = solve_or_throw(capped, "capped slack");
      if (!exonerate_from(sol.primal)) break;
    }
    auto open = undecided();
    std::vector<GroupRef> groups;
    for (std::size_t k : open) groups.push_back(candidates[k]);
    lp::LpModel total = face;
    add_slack_columns(inst, rlp, total, groups, std::nullopt);
    ++counter;
    auto sol = solve_or_throw(total, "total slack");
    if (sol.objective_value <= kSlackTightness) {
      for (std::size_t k : open) {
        tight[k] = true;
        decided[k] = true;
      }
      return tight;
    }
    exonerate_from(sol.primal);
  }
  for (std::size_t k : undecided()) {
    tight[k] = max_group_slack(inst, rlp, face, candidates[k], counter) <= kSlackTightness;
    decided[k] = true;
  }
  return tight;
}

}  // namespace detail

// Agents eliminated by the round whose LP is `rlp` and optimum `sol`.
// Positive shadow prices mark agents directly; every other active agent is
// eliminated iff some demanded group has no slack anywhere on the optimal face.
inline std::vector<EliminatedAgent> detect_eliminated_agents(const NormalizedInstance& inst,
                                                             const std::vector<bool>& active,
                                                             const RoundLp& rlp,
                                                             const lp::LpSolution& sol,
                                                             const MechanismOptions& opt = {},
                                                             std::size_t* lp_counter = nullptr) {
  if (!sol.optimal()) throw std::invalid_argument("detect_eliminated_agents: round LP not optimal");
  if (rlp.y_var == npos) throw std::invalid_argument("detect_eliminated_agents: no active agents");
  std::size_t local_counter = 0;
  std::size_t& counter = lp_counter ? *lp_counter : local_counter;
  const double y_star = sol.objective_value;
  const auto face = detail::optimal_face(rlp, y_star);

  std::vector<EliminatedAgent> out;
  std::vector<bool> flagged(inst.num_agents(), false);
  for (std::size_t i = 0; i < inst.num_agents(); ++i) {
    if (!active[i]) continue;
    for (std::size_t l = 0; l < inst.num_meta(); ++l) {
      const std::size_t row = rlp.alloc_row[i][l];
      if (row == npos || !(sol.duals[row] > kDualThreshold)) continue;
      if (opt.cross_check &&
          detail::max_group_slack(inst, rlp, face, {i, l}, counter) > kSlackTightness) {
        throw InvariantBreach("agent " + inst.agent_names[i] + " has a positive shadow price on " +
                              inst.meta_names[l] + " but its constraint can be slack");
      }
      out.push_back({i, l, DetectionPath::Dual});
      flagged[i] = true;
      break;
    }
  }

  std::vector<detail::GroupRef> candidates;
  for (std::size_t i = 0; i < inst.num_agents(); ++i) {
    if (!active[i] || flagged[i]) continue;
    for (std::size_t l = 0; l < inst.num_meta(); ++l) {
      if (rlp.alloc_row[i][l] != npos) candidates.push_back({i, l});
    }
  }
  auto tight = detail::tight_groups(inst, rlp, face, sol.primal, candidates, opt.batched_aux, counter);
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const auto [i, l] = candidates[k];
    if (tight[k] && !flagged[i]) {
      out.push_back({i, l, DetectionPath::Auxiliary});
      flagged[i] = true;
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.agent < b.agent; });
  return out;
}

// Resources whose supply constraint is tight on every optimal solution.
inline std::vector<std::size_t> eliminated_resources(const NormalizedInstance& inst, const RoundLp& rlp,
                                                     const lp::LpSolution& sol,
                                                     std::size_t* lp_counter = nullptr) {
  const auto face = detail::optimal_face(rlp, sol.objective_value);
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < inst.num_resources(); ++r) {
    lp::LpModel aux = face;
    for (std::size_t i = 0; i < inst.num_agents(); ++i) {
      if (rlp.x_var[i][r] != npos) aux.objective[rlp.x_var[i][r]] = -1.0;
    }
    if (lp_counter) ++*lp_counter;
    const double slack = inst.supply[r] + detail::solve_or_throw(aux, "resource slack").objective_value;
    if (slack <= kSlackTightness) out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// The mechanism.

inline double utility_from_gamma(const NormalizedInstance& inst, std::size_t i, double gamma,
                                 Variant variant) {
  double u = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < inst.num_meta(); ++l) {
    if (!inst.demands(i, l)) continue;
    u = std::min(u, gamma * constraint_coefficient(inst, i, l, variant) / inst.demand(i, l));
  }
  return u;
}

inline MechanismResult run(const NormalizedInstance& inst, const MechanismOptions& opt = {}) {
  const std::size_t n = inst.num_agents();
  MechanismResult res;
  res.variant = opt.variant;
  std::vector<bool> active(n, true);
  std::vector<std::optional<double>> gamma(n);
  std::size_t remaining = n;
  double prev_y = -std::numeric_limits<double>::infinity();

  while (remaining > 0) {
    RoundRecord rec;
    rec.t = res.rounds.size();
    const auto rlp = build_round_lp(inst, active, gamma, opt.variant);
    ++rec.lps_solved;
    const auto sol = lp::solve(rlp.model);
    if (!sol.optimal()) {
      throw NumericalFailure("round " + std::to_string(rec.t) + " LP is " + lp::to_string(sol.status));
    }
    rec.y_star = sol.objective_value;
    if (rec.y_star < prev_y - kMonotoneTolerance) {
      throw InvariantBreach("y* decreased from " + std::to_string(prev_y) + " to " +
                            std::to_string(rec.y_star) + " in round " + std::to_string(rec.t));
    }
    rec.eliminated = detect_eliminated_agents(inst, active, rlp, sol, opt, &rec.lps_solved);
    if (rec.eliminated.empty()) {
      throw InvariantBreach("round " + std::to_string(rec.t) + " eliminated no agent");
    }
    if (opt.trace) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!active[i]) continue;
        for (std::size_t l = 0; l < inst.num_meta(); ++l) {
          if (rlp.alloc_row[i][l] != npos) rec.shadow_prices.push_back({i, l, sol.duals[rlp.alloc_row[i][l]]});
        }
      }
      rec.eliminated_resources = eliminated_resources(inst, rlp, sol, &rec.lps_solved);
    }
    for (const auto& e : rec.eliminated) {
      active[e.agent] = false;
      gamma[e.agent] = rec.y_star;
      --remaining;
    }
    prev_y = rec.y_star;
    res.rounds.push_back(std::move(rec));
  }
  if (res.rounds.size() > std::min(inst.num_resources(), n)) {
    throw InvariantBreach("mechanism took " + std::to_string(res.rounds.size()) + " rounds");
  }

  const auto final_lp = build_round_lp(inst, active, gamma, opt.variant);
  const auto fin = lp::solve(final_lp.model);
  if (!fin.optimal()) throw NumericalFailure(std::string("final LP is ") + lp::to_string(fin.status));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < inst.num_meta(); ++l) {
      if (!inst.demands(i, l)) continue;
      const double target = *gamma[i] * final_lp.coef(i, l);
      const double got = group_sum(inst, final_lp, fin.primal, i, l);
      if (got < target - lp::kFeasibilityTolerance || got > target + kSlackTightness) {
        throw InvariantBreach("final allocation of " + inst.agent_names[i] + " on " + inst.meta_names[l] +
                              " is not tight");
      }
    }
  }
  res.fractional = allocation_from_primal(inst, final_lp, fin.primal);
  res.gamma.resize(n);
  res.utilities.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    res.gamma[i] = *gamma[i];
    res.utilities[i] = utility_from_gamma(inst, i, *gamma[i], opt.variant);
  }
  return res;
}

inline MechanismResult run_alternative_variant(const NormalizedInstance& inst, MechanismOptions opt = {}) {
  opt.variant = Variant::Alternative;
  return run(inst, opt);
}

// ---------------------------------------------------------------------------
// Integral allocations.

// floor(x * units of the meta-type), then per-resource overage (floating
// point only) is removed from the highest-index holders first.
inline Allocation round_down(const NormalizedInstance& inst, const Allocation& fractional) {
  check_dimensions(inst, fractional);
  const std::size_t n = inst.num_agents();
  const std::size_t m = inst.num_resources();
  std::vector<std::vector<std::int64_t>> units(n, std::vector<std::int64_t>(m, 0));
  for (std::size_t r = 0; r < m; ++r) {
    const double total = inst.meta_unit_totals[inst.meta_of[r]];
    std::int64_t used = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = std::max(0.0, fractional.x(i, r)) * total;
      units[i][r] = static_cast<std::int64_t>(std::floor(v + kRoundingGuard));
      used += units[i][r];
    }
    for (std::size_t i = n; i-- > 0 && used > inst.raw_supply[r];) {
      const std::int64_t cut = std::min(units[i][r], used - inst.raw_supply[r]);
      units[i][r] -= cut;
      used -= cut;
    }
  }
  return from_units(inst, units);
}

inline Allocation round_down(const NormalizedInstance& inst, const MechanismResult& result) {
  return round_down(inst, result.fractional);
}

// ---------------------------------------------------------------------------
// JSON.

inline ojson result_to_json(const NormalizedInstance& inst, const MechanismResult& res,
                            const std::optional<Allocation>& rounded = std::nullopt, bool trace = false) {
  ojson j;
  j["utilities"] = ojson::object();
  j["gamma"] = ojson::object();
  for (std::size_t i = 0; i < inst.num_agents(); ++i) {
    j["utilities"][inst.agent_names[i]] = res.utilities[i];
    j["gamma"][inst.agent_names[i]] = res.gamma[i];
  }
  j["rounds"] = ojson::array();
  for (const auto& rec : res.rounds) {
    ojson r;
    r["t"] = rec.t;
    r["y"] = rec.y_star;
    r["eliminated"] = ojson::array();
    for (const auto& e : rec.eliminated) r["eliminated"].push_back(inst.agent_names[e.agent]);
    if (trace) {
      r["witnesses"] = ojson::array();
      for (const auto& e : rec.eliminated) {
        r["witnesses"].push_back(ojson{{"agent", inst.agent_names[e.agent]},
                                       {"meta_type", inst.meta_names[e.meta]},
                                       {"path", to_string(e.path)}});
      }
      r["shadow_prices"] = ojson::array();
      for (const auto& q : rec.shadow_prices) {
        r["shadow_prices"].push_back(ojson{{"agent", inst.agent_names[q.agent]},
                                           {"meta_type", inst.meta_names[q.meta]},
                                           {"value", q.value}});
      }
      if (rec.eliminated_resources) {
        r["eliminated_resources"] = ojson::array();
        for (std::size_t k : *rec.eliminated_resources) r["eliminated_resources"].push_back(inst.resource_ids[k]);
      }
      r["lps_solved"] = rec.lps_solved;
    }
    j["rounds"].push_back(std::move(r));
  }
  j["allocation"] = allocation_to_json(inst, rounded ? *rounded : res.fractional);
  return j;
}

}  // namespace drfmt
