#pragma once

// Executable fairness checks: weighted envy, Pareto optimality, sharing
// incentive, proportionality and its sufficient condition, and randomized
// strategy-proofness probing.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "drfmt/error.hpp"
#include "drfmt/instance_json.hpp"
#include "drfmt/lp.hpp"
#include "drfmt/mechanism.hpp"
#include "drfmt/model.hpp"
#include "drfmt/parallel.hpp"
#include "drfmt/random.hpp"

namespace drfmt {

inline constexpr double kEnvyTolerance = 1e-6;
inline constexpr double kParetoTolerance = 1e-6;
inline constexpr double kUtilityTolerance = 1e-6;
inline constexpr double kGainTolerance = 1e-5;
inline constexpr double kHallTolerance = 1e-9;

// ---------------------------------------------------------------------------
// Envy.

struct EnvyReport {
  Matrix envy;  // (i, j): how much i prefers j's weight-scaled bundle
  // Pairs (i, j) where j has zero weight on a meta-type i demands.
  std::vector<std::pair<std::size_t, std::size_t>> zero_weight_pairs;

  double max() const {
    double m = 0.0;
    for (std::size_t i = 0; i < envy.rows(); ++i)
      for (std::size_t j = 0; j < envy.cols(); ++j) m = std::max(m, envy(i, j));
    return m;
  }
};

// Utility agent i would get from j's bundle rescaled by w_il / w_jl.
inline double utility_of_scaled_bundle(const NormalizedInstance& inst, const Allocation& alloc,
                                       std::size_t i, std::size_t j, bool* zero_weight = nullptr) {
  return leontief(inst, i, [&](std::size_t r) {
    const std::size_t l = inst.meta_of[r];
    if (inst.weight(j, l) == 0.0) {
      if (zero_weight) *zero_weight = true;
      return 0.0;
    }
    return alloc.x(j, r) * inst.weight(i, l) / inst.weight(j, l);
  });
}

inline EnvyReport envy_matrix(const NormalizedInstance& inst, const Allocation& alloc) {
  check_dimensions(inst, alloc);
  const std::size_t n = inst.num_agents();
  EnvyReport rep{Matrix(n, n), {}};
  const auto own = utilities(inst, alloc);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      bool zero = false;
      const double other = utility_of_scaled_bundle(inst, alloc, i, j, &zero);
      if (zero) rep.zero_weight_pairs.emplace_back(i, j);
      rep.envy(i, j) = std::max(0.0, other - own[i]);
    }
  }
  return rep;
}

struct NormalizedEnvy {
  double value = 0.0;       // +inf when some zero-utility agent envies
  bool unbounded = false;
  std::size_t envious = npos;
  std::size_t envied = npos;
};

inline NormalizedEnvy normalized_max_envy(const NormalizedInstance& inst, const Allocation& alloc) {
  const auto rep = envy_matrix(inst, alloc);
  const auto own = utilities(inst, alloc);
  NormalizedEnvy out;
  for (std::size_t i = 0; i < inst.num_agents(); ++i) {
    for (std::size_t j = 0; j < inst.num_agents(); ++j) {
      const double e = rep.envy(i, j);
      if (e <= 0.0) continue;
      const double v = own[i] > 0.0 ? e / own[i] : std::numeric_limits<double>::infinity();
      if (v > out.value) {
        out.value = v;
        out.envious = i;
        out.envied = j;
      }
    }
  }
  out.unbounded = std::isinf(out.value);
  return out;
}

// Envy in items after integral rounding: the units i would need to add,
// over its demanded groups, to reach the utility of j's scaled bundle.
inline Matrix item_envy(const NormalizedInstance& inst, const Allocation& rounded) {
  if (!rounded.units) throw std::invalid_argument("item_envy: allocation has no unit view");
  const std::size_t n = inst.num_agents();
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double target = utility_of_scaled_bundle(inst, rounded, i, j);
      double items = 0.0;
      for (std::size_t l = 0; l < inst.num_meta(); ++l) {
        if (!inst.demands(i, l)) continue;
        double held = 0.0;
        for (std::size_t r : inst.groups[i][l]) held += static_cast<double>((*rounded.units)[i][r]);
        items += std::max(0.0, target * inst.raw_demand(i, l) - held);
      }
      out(i, j) = items;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pareto optimality.

struct ParetoResult {
  bool is_pareto = true;
  double improvement = 0.0;  // optimum of the improvement LP
  std::optional<Allocation> certificate;
};

// maximize sum eps_i  s.t.  sum_{r in g} x'_ir >= d_il (u_i + eps_i), supply.
inline ParetoResult check_pareto(const NormalizedInstance& inst, const Allocation& alloc) {
  check_dimensions(inst, alloc);
  const std::size_t n = inst.num_agents();
  const std::size_t m = inst.num_resources();
  const auto u = utilities(inst, alloc);
  lp::LpModel model;
  std::vector<std::vector<std::size_t>> var(n, std::vector<std::size_t>(m, npos));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < m; ++r)
      if (inst.accessible(i, r)) var[i][r] = model.add_variable();
  std::vector<std::size_t> eps(n);
  for (std::size_t i = 0; i < n; ++i) eps[i] = model.add_variable(1.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < inst.num_meta(); ++l) {
      if (!inst.demands(i, l)) continue;
      std::vector<lp::Term> terms{{eps[i], -inst.demand(i, l)}};
      for (std::size_t r : inst.groups[i][l]) terms.push_back({var[i][r], 1.0});
      model.add_constraint(std::move(terms), lp::Relation::GreaterEqual, inst.demand(i, l) * u[i]);
    }
  }
  for (std::size_t r = 0; r < m; ++r) {
    std::vector<lp::Term> terms;
    for (std::size_t i = 0; i < n; ++i)
      if (var[i][r] != npos) terms.push_back({var[i][r], 1.0});
    model.add_constraint(std::move(terms), lp::Relation::LessEqual, inst.supply[r]);
  }
  const auto sol = lp::solve(model);
  if (sol.status == lp::LpStatus::Infeasible) {
    // The allocation itself exceeds what the supply can back.
    throw ValidationError("allocation is not feasible under the supplies");
  }
  if (!sol.optimal()) throw NumericalFailure(std::string("pareto LP is ") + lp::to_string(sol.status));
  ParetoResult out;
  out.improvement = sol.objective_value;
  out.is_pareto = sol.objective_value <= kParetoTolerance;
  if (!out.is_pareto) {
    auto cert = Allocation::zeros(inst);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t r = 0; r < m; ++r)
        if (var[i][r] != npos) cert.x(i, r) = std::max(0.0, sol.primal[var[i][r]]);
    out.certificate = std::move(cert);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sharing incentive and proportionality.

struct AgentVerdict {
  double benchmark = 0.0;  // standalone or proportional utility
  double achieved = 0.0;
  bool ok = true;
};

inline bool all_ok(const std::vector<AgentVerdict>& v) {
  return std::all_of(v.begin(), v.end(), [](const auto& a) { return a.ok; });
}

// Standalone utility from the agent's own accessible contributions.
inline double standalone_utility(const NormalizedInstance& inst, std::size_t i) {
  double u = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < inst.num_meta(); ++l)
    if (inst.demands(i, l)) u = std::min(u, inst.contribution(i, l) / inst.demand(i, l));
  return u;
}

inline void require_contribution_weights(const NormalizedInstance& inst) {
  if (!inst.has_contributions()) {
    throw ValidationError("sharing incentive needs contributions for every agent");
  }
  for (std::size_t i = 0; i < inst.num_agents(); ++i) {
    for (std::size_t l = 0; l < inst.num_meta(); ++l) {
      if (!inst.demands(i, l)) continue;
      if (std::abs(inst.weight(i, l) - inst.contribution(i, l)) > 1e-12) {
        throw ValidationError("weights of " + inst.agent_names[i] +
                              " are not its accessible contributions");
      }
    }
  }
}

inline std::vector<AgentVerdict> check_sharing_incentive(const NormalizedInstance& inst,
                                                         const Allocation& alloc) {
  require_contribution_weights(inst);
  std::vector<AgentVerdict> out;
  for (std::size_t i = 0; i < inst.num_agents(); ++i) {
    const double own = standalone_utility(inst, i);
    const double got = utility(inst, i, alloc);
    out.push_back({own, got, got >= own - kUtilityTolerance});
  }
  return out;
}

// Normalizes with contribution weights, runs the mechanism, checks.
inline std::vector<AgentVerdict> check_sharing_incentive(const RawInstance& raw,
                                                         const MechanismOptions& opt = {}) {
  const auto inst = normalize_contribution_weighted(raw);
  return check_sharing_incentive(inst, run(inst, opt).fractional);
}

inline double proportional_utility(const NormalizedInstance& inst, std::size_t i) {
  double u = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < inst.num_meta(); ++l) {
    if (!inst.demands(i, l)) continue;
    double s = 0.0;
    for (std::size_t r : inst.groups[i][l]) s += inst.supply[r];
    u = std::min(u, inst.weight(i, l) / inst.demand(i, l) * s);
  }
  return u;
}

// x'_ir = w_il S_r on every accessible resource.
inline Allocation proportional_allocation(const NormalizedInstance& inst) {
  auto alloc = Allocation::zeros(inst);
  for (std::size_t i = 0; i < inst.num_agents(); ++i)
    for (std::size_t r = 0; r < inst.num_resources(); ++r)
      if (inst.accessible(i, r)) alloc.x(i, r) = inst.weight(i, inst.meta_of[r]) * inst.supply[r];
  return alloc;
}

inline std::vector<AgentVerdict> check_proportionality(const NormalizedInstance& inst,
                                                       const Allocation& alloc) {
  std::vector<AgentVerdict> out;
  for (std::size_t i = 0; i < inst.num_agents(); ++i) {
    const double p = proportional_utility(inst, i);
    const double got = utility(inst, i, alloc);
    out.push_back({p, got, got >= p - kUtilityTolerance});
  }
  return out;
}

struct Assumption1 {
  bool holds = true;
  double y_hat = 0.0;    // right-hand side
  double lhs_min = 0.0;  // min over meta-types and agent subsets
  std::size_t meta = npos;  // meta-type attaining lhs_min
};

// The subset minimum is computed without enumerating subsets: for each
// meta-type, the largest uniform scale t at which every demander can be
// served c_il * t from its group is exactly the Hall-type minimum of
// supply(union of groups) / sum of c_il over agent subsets.
inline Assumption1 check_assumption1(const NormalizedInstance& inst) {
  Assumption1 out;
  for (std::size_t i = 0; i < inst.num_agents(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < inst.num_meta(); ++l) {
      if (!inst.demands(i, l)) continue;
      double s = 0.0;
      for (std::size_t r : inst.groups[i][l]) s += inst.supply[r];
      best = std::min(best, inst.weight(i, l) * s / inst.share_coefficient(i, l));
    }
    out.y_hat = std::max(out.y_hat, best);
  }
  out.lhs_min = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < inst.num_meta(); ++l) {
    lp::LpModel model;
    const std::size_t t = model.add_variable(1.0);
    std::vector<std::vector<lp::Term>> supply_rows(inst.num_resources());
    bool any = false;
    for (std::size_t i = 0; i < inst.num_agents(); ++i) {
      if (!inst.demands(i, l)) continue;
      any = true;
      std::vector<lp::Term> terms{{t, -inst.share_coefficient(i, l)}};
      for (std::size_t r : inst.groups[i][l]) {
        const std::size_t f = model.add_variable();
        terms.push_back({f, 1.0});
        supply_rows[r].push_back({f, 1.0});
      }
      model.add_constraint(std::move(terms), lp::Relation::GreaterEqual, 0.0);
    }
    if (!any) continue;
    for (std::size_t r : inst.meta_resources[l]) {
      if (!supply_rows[r].empty()) {
        model.add_constraint(std::move(supply_rows[r]), lp::Relation::LessEqual, inst.supply[r]);
      }
    }
    const auto sol = lp::solve(model);
    if (!sol.optimal()) throw NumericalFailure(std::string("Hall LP is ") + lp::to_string(sol.status));
    if (sol.objective_value < out.lhs_min) {
      out.lhs_min = sol.objective_value;
      out.meta = l;
    }
  }
  out.holds = out.lhs_min >= out.y_hat - kHallTolerance;
  return out;
}

// ---------------------------------------------------------------------------
// Strategy-proofness probing.

struct Misreport {
  std::vector<double> demand;                    // per meta-type, normalized
  std::vector<std::vector<std::size_t>> groups;  // per meta-type
};

inline Misreport truthful_report(const NormalizedInstance& inst, std::size_t agent) {
  Misreport m;
  for (std::size_t l = 0; l < inst.num_meta(); ++l) m.demand.push_back(inst.demand(agent, l));
  m.groups = inst.groups[agent];
  return m;
}

inline NormalizedInstance apply_misreport(const NormalizedInstance& inst, std::size_t agent,
                                          const Misreport& lie) {
  if (lie.demand.size() != inst.num_meta() || lie.groups.size() != inst.num_meta()) {
    throw std::invalid_argument("misreport has the wrong number of meta-types");
  }
  NormalizedInstance out = inst;
  bool any = false;
  for (std::size_t l = 0; l < inst.num_meta(); ++l) {
    const double d = lie.demand[l];
    if (!(d >= 0.0) || !std::isfinite(d)) throw ValidationError("misreported demand must be finite, >= 0");
    if ((d > 0.0) != !lie.groups[l].empty()) {
      throw ValidationError("misreport needs a group exactly where demand is positive");
    }
    if (d > 0.0 && !(inst.weight(agent, l) > 0.0)) {
      throw ValidationError("misreport demands a meta-type with zero weight");
    }
    for (std::size_t r : lie.groups[l]) {
      if (r >= inst.num_resources() || inst.meta_of[r] != l) {
        throw ValidationError("misreported group leaves its meta-type");
      }
    }
    any = any || d > 0.0;
    out.demand(agent, l) = d;
    out.raw_demand(agent, l) = d * inst.meta_unit_totals[l];
    out.groups[agent][l] = lie.groups[l];
    std::sort(out.groups[agent][l].begin(), out.groups[agent][l].end());
  }
  if (!any) throw ValidationError("misreport demands nothing");
  out.dominant[agent] = dominant_of(out.demand, out.weight, agent);
  return out;
}

struct GainReport {
  double truthful = 0.0;
  double misreported = 0.0;  // true utility of the bundle obtained by lying
  double gain() const { return misreported - truthful; }
};

inline GainReport misreport_gain(const NormalizedInstance& inst, std::size_t agent, const Misreport& lie,
                                 const MechanismOptions& opt = {},
                                 std::optional<double> truthful_utility = std::nullopt) {
  GainReport g;
  g.truthful = truthful_utility ? *truthful_utility : utility(inst, agent, run(inst, opt).fractional);
  const auto res = run(apply_misreport(inst, agent, lie), opt);
  g.misreported = utility(inst, agent, res.fractional);
  return g;
}

struct FuzzFinding {
  std::size_t trial = 0;
  double gain = 0.0;
  std::string description;
};

struct FuzzResult {
  std::size_t trials = 0;
  std::vector<FuzzFinding> violations;
  std::vector<FuzzFinding> failures;  // mechanism errors on a misreport
  double max_gain = 0.0;
  double truthful_utility = 0.0;
};

inline std::string describe(const NormalizedInstance& inst, const Misreport& m) {
  std::ostringstream os;
  for (std::size_t l = 0; l < inst.num_meta(); ++l) {
    if (l) os << "; ";
    os << inst.meta_names[l] << ": d=" << m.demand[l] * inst.meta_unit_totals[l] << " {";
    for (std::size_t k = 0; k < m.groups[l].size(); ++k) os << (k ? "," : "") << inst.resource_ids[m.groups[l][k]];
    os << "}";
  }
  return os.str();
}

// Random misreport: demand factors log-uniform in [0.1, 10], meta-types
// dropped or added where weights allow, and each group replaced by a
// random non-empty subset of its meta-type with probability 1/2.
inline Misreport random_misreport(const NormalizedInstance& inst, std::size_t agent, Rng& rng) {
  Misreport m = truthful_report(inst, agent);
  const std::size_t L = inst.num_meta();
  auto demanded = [&] {
    std::size_t c = 0;
    for (double d : m.demand) c += d > 0.0;
    return c;
  };
  auto random_group = [&](std::size_t l) {
    const auto& pool = inst.meta_resources[l];
    const std::size_t k = 1 + rng.index(pool.size());
    return rng.subset(pool, k);
  };
  for (std::size_t l = 0; l < L; ++l) {
    if (m.demand[l] > 0.0) {
      if (demanded() > 1 && rng.bernoulli(0.15)) {
        m.demand[l] = 0.0;
        m.groups[l].clear();
        continue;
      }
      m.demand[l] *= rng.log_uniform(0.1, 10.0);
      if (rng.bernoulli(0.5)) m.groups[l] = random_group(l);
    } else if (inst.weight(agent, l) > 0.0 && rng.bernoulli(0.15)) {
      // Typical size of a genuine demand for this meta-type, perturbed.
      double ref = 0.0;
      for (std::size_t i = 0; i < inst.num_agents(); ++i) ref = std::max(ref, inst.demand(i, l));
      if (ref == 0.0) ref = 1.0 / inst.meta_unit_totals[l];
      m.demand[l] = ref * rng.log_uniform(0.1, 10.0);
      m.groups[l] = random_group(l);
    }
  }
  return m;
}

inline FuzzResult strategyproofness_fuzz(const NormalizedInstance& inst, std::size_t agent, std::size_t trials,
                                         std::uint64_t seed, const MechanismOptions& opt = {},
                                         std::size_t threads = 1) {
  if (trials == 0) throw std::invalid_argument("fuzz needs at least one trial");
  if (agent >= inst.num_agents()) throw ValidationError("fuzz: agent index out of range");
  FuzzResult out;
  out.trials = trials;
  out.truthful_utility = utility(inst, agent, run(inst, opt).fractional);
  std::vector<std::optional<FuzzFinding>> found(trials), failed(trials);
  std::vector<double> gains(trials, 0.0);
  parallel_for(trials, threads, [&](std::size_t k) {
    Rng rng(derive_seed(seed, agent, k));
    const auto lie = random_misreport(inst, agent, rng);
    try {
      const auto g = misreport_gain(inst, agent, lie, opt, out.truthful_utility);
      gains[k] = g.gain();
      if (g.gain() > kGainTolerance) found[k] = FuzzFinding{k, g.gain(), describe(inst, lie)};
    } catch (const std::exception& e) {
      failed[k] = FuzzFinding{k, 0.0, describe(inst, lie) + ": " + e.what()};
    }
  });
  for (std::size_t k = 0; k < trials; ++k) {
    out.max_gain = std::max(out.max_gain, gains[k]);
    if (found[k]) out.violations.push_back(*found[k]);
    if (failed[k]) out.failures.push_back(*failed[k]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports.

struct FairnessReport {
  std::optional<EnvyReport> envy;
  std::optional<NormalizedEnvy> normalized_envy;
  std::optional<ParetoResult> pareto;
  std::optional<std::vector<AgentVerdict>> sharing_incentive;
  std::optional<std::vector<AgentVerdict>> proportionality;
  std::optional<Assumption1> assumption1;
  std::optional<FuzzResult> strategyproofness;  // merged over agents

  bool envy_free() const { return !envy || envy->max() <= kEnvyTolerance; }
  bool passed() const {
    return envy_free() && (!pareto || pareto->is_pareto) && (!sharing_incentive || all_ok(*sharing_incentive)) &&
           (!proportionality || all_ok(*proportionality)) &&
           (!strategyproofness || (strategyproofness->violations.empty() && strategyproofness->failures.empty()));
  }
};

inline ojson number_or_string(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  return v;
}

inline ojson verdicts_to_json(const NormalizedInstance& inst, const std::vector<AgentVerdict>& v,
                              const char* benchmark_key) {
  ojson j = ojson::object();
  for (std::size_t i = 0; i < v.size(); ++i) {
    j[inst.agent_names[i]] = ojson{{benchmark_key, v[i].benchmark}, {"u_alloc", v[i].achieved}, {"ok", v[i].ok}};
  }
  return j;
}

inline ojson report_to_json(const NormalizedInstance& inst, const FairnessReport& rep) {
  ojson j;
  j["passed"] = rep.passed();
  if (rep.envy) {
    ojson e = ojson::object();
    for (std::size_t i = 0; i < inst.num_agents(); ++i) {
      ojson row = ojson::object();
      for (std::size_t k = 0; k < inst.num_agents(); ++k) row[inst.agent_names[k]] = rep.envy->envy(i, k);
      e[inst.agent_names[i]] = std::move(row);
    }
    j["envy"] = std::move(e);
    j["max_envy"] = rep.envy->max();
    j["envy_free"] = rep.envy_free();
    ojson flagged = ojson::array();
    for (auto [a, b] : rep.envy->zero_weight_pairs)
      flagged.push_back(ojson::array({inst.agent_names[a], inst.agent_names[b]}));
    j["zero_weight_pairs"] = std::move(flagged);
  }
  if (rep.normalized_envy) {
    j["normalized_max_envy"] = number_or_string(rep.normalized_envy->value);
    j["normalized_envy_unbounded"] = rep.normalized_envy->unbounded;
  }
  if (rep.pareto) {
    ojson p{{"is_pareto", rep.pareto->is_pareto}, {"improvement", rep.pareto->improvement}};
    p["improvement_certificate"] =
        rep.pareto->certificate ? allocation_to_json(inst, *rep.pareto->certificate) : ojson(nullptr);
    j["pareto"] = std::move(p);
  }
  if (rep.sharing_incentive) j["sharing_incentive"] = verdicts_to_json(inst, *rep.sharing_incentive, "u_own");
  if (rep.proportionality) j["proportionality"] = verdicts_to_json(inst, *rep.proportionality, "u_prop");
  if (rep.assumption1) {
    j["assumption1"] = ojson{{"holds", rep.assumption1->holds},
                             {"y_hat", rep.assumption1->y_hat},
                             {"lhs_min", number_or_string(rep.assumption1->lhs_min)}};
  }
  if (rep.strategyproofness) {
    const auto& f = *rep.strategyproofness;
    ojson s{{"trials", f.trials}, {"max_gain", f.max_gain}};
    s["violations"] = ojson::array();
    for (const auto& v : f.violations)
      s["violations"].push_back(ojson{{"trial", v.trial}, {"gain", v.gain}, {"misreport", v.description}});
    s["failures"] = ojson::array();
    for (const auto& v : f.failures) s["failures"].push_back(ojson{{"trial", v.trial}, {"error", v.description}});
    j["strategyproofness"] = std::move(s);
  }
  return j;
}

}  // namespace drfmt
