#pragma once

// Problem instances: meta-types partitioning resource types, agents with
// Leontief demands over meta-types, per-meta-type weights and demand groups
// restricting which resource types of a meta-type an agent can use.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "drfmt/error.hpp"

namespace drfmt {

inline constexpr double kNormalizationTolerance = 1e-9;
inline constexpr std::size_t npos = static_cast<std::size_t>(-1);

// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  Matrix scaled(double c) const {
    Matrix out = *this;
    for (double& v : out.data_) v *= c;
    return out;
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Raw (unit-denominated) instances, as read from JSON.

struct ResourceSpec {
  std::string id;
  std::int64_t supply = 0;

  bool operator==(const ResourceSpec&) const = default;
};

struct MetaTypeSpec {
  std::string name;
  std::vector<ResourceSpec> resources;

  bool operator==(const MetaTypeSpec&) const = default;
};

// Keys of weights/demands/groups are meta-type names; contributions are
// keyed by resource id.
struct AgentSpec {
  std::string name;
  std::map<std::string, double> weights;
  std::map<std::string, double> demands;
  std::map<std::string, std::vector<std::string>> groups;
  std::optional<std::map<std::string, double>> contributions;

  bool operator==(const AgentSpec&) const = default;
};

struct RawInstance {
  std::vector<MetaTypeSpec> meta_types;
  std::vector<AgentSpec> agents;

  bool operator==(const RawInstance&) const = default;
};

struct Violation {
  std::string subject;  // agent / meta-type / resource at fault
  std::string message;

  bool operator==(const Violation&) const = default;
};

// Every broken instance invariant; empty means valid.
inline std::vector<Violation> validate(const RawInstance& raw) {
  std::vector<Violation> out;
  auto flag = [&](std::string subject, std::string message) {
    out.push_back(Violation{std::move(subject), std::move(message)});
  };

  if (raw.meta_types.empty()) flag("instance", "no meta-types");
  std::map<std::string, std::size_t> meta_index;
  std::map<std::string, std::string> owner;  // resource -> meta-type
  std::map<std::string, std::int64_t> supply;
  for (std::size_t l = 0; l < raw.meta_types.size(); ++l) {
    const auto& mt = raw.meta_types[l];
    if (!meta_index.emplace(mt.name, l).second) {
      flag("meta-type " + mt.name, "duplicate meta-type name");
    }
    if (mt.resources.empty()) flag("meta-type " + mt.name, "has no resource types");
    std::int64_t total = 0;
    for (const auto& r : mt.resources) {
      if (r.supply < 0) flag("resource " + r.id, "negative supply");
      total += std::max<std::int64_t>(r.supply, 0);
      auto [it, fresh] = owner.emplace(r.id, mt.name);
      if (!fresh) {
        flag("resource " + r.id,
             "appears in meta-types " + it->second + " and " + mt.name);
      } else {
        supply[r.id] = r.supply;
      }
    }
    if (total <= 0) flag("meta-type " + mt.name, "total supply must be positive");
  }

  if (raw.agents.empty()) flag("instance", "no agents");
  std::set<std::string> agent_names;
  std::map<std::string, double> contributed;
  for (const auto& a : raw.agents) {
    const std::string who = "agent " + a.name;
    if (!agent_names.insert(a.name).second) flag(who, "duplicate agent name");
    bool any_demand = false;
    for (const auto& [meta, d] : a.demands) {
      if (!meta_index.count(meta)) {
        flag(who, "demand for unknown meta-type " + meta);
        continue;
      }
      if (!std::isfinite(d) || d < 0.0) flag(who, "demand for " + meta + " must be non-negative");
      if (d > 0.0) {
        any_demand = true;
        if (!a.groups.count(meta)) flag(who, "demands " + meta + " but has no demand group for it");
        auto w = a.weights.find(meta);
        if (w == a.weights.end() || !(w->second > 0.0)) {
          flag(who, "needs a positive weight for demanded meta-type " + meta);
        }
      }
    }
    if (!any_demand) flag(who, "has no positive demand");
    for (const auto& [meta, w] : a.weights) {
      if (!meta_index.count(meta)) flag(who, "weight for unknown meta-type " + meta);
      if (!std::isfinite(w) || w < 0.0) flag(who, "weight for " + meta + " must be non-negative");
    }
    for (const auto& [meta, group] : a.groups) {
      auto l = meta_index.find(meta);
      if (l == meta_index.end()) {
        flag(who, "demand group for unknown meta-type " + meta);
        continue;
      }
      auto d = a.demands.find(meta);
      if (d == a.demands.end() || !(d->second > 0.0)) {
        flag(who, "has a demand group for " + meta + " without positive demand");
      }
      if (group.empty()) flag(who, "demand group for " + meta + " is empty");
      std::set<std::string> seen;
      for (const auto& r : group) {
        if (!seen.insert(r).second) flag(who, "lists " + r + " twice in its " + meta + " group");
        auto o = owner.find(r);
        if (o == owner.end() || o->second != meta) {
          flag(who, "group for " + meta + " contains " + r + ", which is not a " + meta + " resource");
        }
      }
    }
    if (a.contributions) {
      for (const auto& [r, c] : *a.contributions) {
        if (!owner.count(r)) {
          flag(who, "contribution of unknown resource " + r);
          continue;
        }
        if (!std::isfinite(c) || c < 0.0) flag(who, "contribution of " + r + " must be non-negative");
        contributed[r] += c;
      }
    }
  }
  for (const auto& [r, total] : contributed) {
    if (total > static_cast<double>(supply[r]) + 1e-9) {
      flag("resource " + r, "contributions exceed supply");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalized instances: supplies as fractions of their meta-type, demands as
// fractions of meta-type supply per unit of work, weights summing to one per
// meta-type (up to an implicit phantom remainder, see phantom_weight).

struct Dominant {
  std::size_t meta = 0;
  double demand = 0.0;  // d_{i*}
  double weight = 0.0;  // w_{i*}
};

struct NormalizedInstance {
  std::vector<std::string> agent_names;
  std::vector<std::string> meta_names;
  std::vector<std::string> resource_ids;
  std::vector<std::size_t> meta_of;                     // resource -> meta-type
  std::vector<std::vector<std::size_t>> meta_resources;  // meta-type -> resources

  std::vector<double> supply;               // S_r, sums to 1 per meta-type
  std::vector<std::int64_t> raw_supply;     // units
  std::vector<double> meta_unit_totals;     // units per meta-type
  Matrix demand;                            // d_il
  Matrix raw_demand;                        // units per unit of work
  Matrix weight;                            // w_il
  std::vector<double> phantom_weight;       // 1 - sum_i w_il (contribution weighting)
  // groups[i][l]: resource indices; empty iff agent i does not demand l.
  std::vector<std::vector<std::vector<std::size_t>>> groups;
  std::vector<Dominant> dominant;
  Matrix contribution;                      // s_il; empty unless contributions given

  std::size_t num_agents() const { return agent_names.size(); }
  std::size_t num_resources() const { return resource_ids.size(); }
  std::size_t num_meta() const { return meta_names.size(); }

  bool demands(std::size_t i, std::size_t l) const { return demand(i, l) > 0.0; }

  bool accessible(std::size_t i, std::size_t r) const {
    const auto& g = groups[i][meta_of[r]];
    return std::find(g.begin(), g.end(), r) != g.end();
  }

  // Allocation-constraint coefficient w_{i*} d_il / d_{i*}.
  double share_coefficient(std::size_t i, std::size_t l) const {
    return dominant[i].weight * demand(i, l) / dominant[i].demand;
  }

  bool has_contributions() const { return contribution.rows() == num_agents() && num_agents() > 0; }
};

// argmin_l w_il / d_il over demanded meta-types; ties go to the lowest index.
inline Dominant dominant_of(const Matrix& demand, const Matrix& weight, std::size_t i) {
  Dominant best;
  double ratio = std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t l = 0; l < demand.cols(); ++l) {
    if (!(demand(i, l) > 0.0)) continue;
    const double r = weight(i, l) / demand(i, l);
    if (!found || r < ratio * (1.0 - 1e-12)) {
      ratio = r;
      best = Dominant{l, demand(i, l), weight(i, l)};
      found = true;
    }
  }
  if (!found) throw ValidationError("agent " + std::to_string(i) + " has no demanded meta-type");
  return best;
}

inline void recompute_dominant(NormalizedInstance& inst) {
  inst.dominant.resize(inst.num_agents());
  for (std::size_t i = 0; i < inst.num_agents(); ++i) {
    inst.dominant[i] = dominant_of(inst.demand, inst.weight, i);
  }
}

namespace detail {

inline void throw_if_invalid(const RawInstance& raw) {
  auto v = validate(raw);
  if (v.empty()) return;
  std::string msg = "invalid instance: " + v.front().subject + ": " + v.front().message;
  if (v.size() > 1) msg += " (and " + std::to_string(v.size() - 1) + " more)";
  throw ValidationError(msg);
}

inline NormalizedInstance normalize_structure(const RawInstance& raw) {
  NormalizedInstance inst;
  const std::size_t L = raw.meta_types.size();
  const std::size_t n = raw.agents.size();
  std::map<std::string, std::size_t> meta_index;
  std::map<std::string, std::size_t> res_index;
  inst.meta_resources.resize(L);
  inst.meta_unit_totals.assign(L, 0.0);
  for (std::size_t l = 0; l < L; ++l) {
    const auto& mt = raw.meta_types[l];
    meta_index[mt.name] = l;
    inst.meta_names.push_back(mt.name);
    for (const auto& r : mt.resources) {
      res_index[r.id] = inst.resource_ids.size();
      inst.meta_resources[l].push_back(inst.resource_ids.size());
      inst.resource_ids.push_back(r.id);
      inst.meta_of.push_back(l);
      inst.raw_supply.push_back(r.supply);
      inst.meta_unit_totals[l] += static_cast<double>(r.supply);
    }
  }
  inst.supply.resize(inst.num_resources());
  for (std::size_t r = 0; r < inst.num_resources(); ++r) {
    inst.supply[r] = static_cast<double>(inst.raw_supply[r]) / inst.meta_unit_totals[inst.meta_of[r]];
  }
  inst.demand = Matrix(n, L);
  inst.raw_demand = Matrix(n, L);
  inst.weight = Matrix(n, L);
  inst.phantom_weight.assign(L, 0.0);
  inst.groups.assign(n, std::vector<std::vector<std::size_t>>(L));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = raw.agents[i];
    inst.agent_names.push_back(a.name);
    for (const auto& [meta, d] : a.demands) {
      const std::size_t l = meta_index.at(meta);
      inst.raw_demand(i, l) = d;
      inst.demand(i, l) = d / inst.meta_unit_totals[l];
    }
    for (const auto& [meta, g] : a.groups) {
      const std::size_t l = meta_index.at(meta);
      for (const auto& r : g) inst.groups[i][l].push_back(res_index.at(r));
      std::sort(inst.groups[i][l].begin(), inst.groups[i][l].end());
    }
  }
  bool any_contrib = false;
  for (const auto& a : raw.agents) any_contrib = any_contrib || a.contributions.has_value();
  if (any_contrib) {
    inst.contribution = Matrix(n, L);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& a = raw.agents[i];
      if (!a.contributions) continue;
      for (std::size_t l = 0; l < L; ++l) {
        double units = 0.0;
        for (std::size_t r : inst.groups[i][l]) {
          auto c = a.contributions->find(inst.resource_ids[r]);
          if (c != a.contributions->end()) units += c->second;
        }
        inst.contribution(i, l) = units / inst.meta_unit_totals[l];
      }
    }
  }
  return inst;
}

}  // namespace detail

// Validates, then normalizes supplies and demands by meta-type unit totals
// and weights so that they sum to one within each meta-type.
inline NormalizedInstance normalize(const RawInstance& raw) {
  detail::throw_if_invalid(raw);
  auto inst = detail::normalize_structure(raw);
  const std::size_t L = inst.num_meta();
  for (std::size_t l = 0; l < L; ++l) {
    double total = 0.0;
    for (const auto& a : raw.agents) {
      auto w = a.weights.find(raw.meta_types[l].name);
      if (w != a.weights.end()) total += w->second;
    }
    if (total <= 0.0) continue;
    for (std::size_t i = 0; i < inst.num_agents(); ++i) {
      auto w = raw.agents[i].weights.find(raw.meta_types[l].name);
      if (w != raw.agents[i].weights.end()) inst.weight(i, l) = w->second / total;
    }
  }
  recompute_dominant(inst);
  return inst;
}

// Accessible contributed units of each demanded meta-type, keyed by meta name.
inline std::map<std::string, double> accessible_contribution_units(const AgentSpec& a) {
  std::map<std::string, double> out;
  for (const auto& [meta, group] : a.groups) {
    double units = 0.0;
    if (a.contributions) {
      for (const auto& r : group) {
        auto c = a.contributions->find(r);
        if (c != a.contributions->end()) units += c->second;
      }
    }
    out[meta] = units;
  }
  return out;
}

// Copy of `raw` whose weights are the agents' accessible contributed units.
inline RawInstance with_contribution_weights(RawInstance raw) {
  for (auto& a : raw.agents) {
    a.weights.clear();
    for (const auto& [meta, units] : accessible_contribution_units(a)) a.weights[meta] = units;
  }
  return raw;
}

// Normalization for pooled-contribution settings: w_il = s_il, the fraction
// of meta-type l the agent both contributed and can access. The remainder
// 1 - sum_i s_il is recorded as phantom weight instead of being spread over
// the agents. Raw weights must already equal accessible contributed units.
inline NormalizedInstance normalize_contribution_weighted(const RawInstance& raw) {
  detail::throw_if_invalid(raw);
  for (const auto& a : raw.agents) {
    if (!a.contributions) {
      throw ValidationError("agent " + a.name + " has no contributions");
    }
    for (const auto& [meta, units] : accessible_contribution_units(a)) {
      auto w = a.weights.find(meta);
      const double have = w == a.weights.end() ? 0.0 : w->second;
      if (std::abs(have - units) > 1e-9 * std::max(1.0, units)) {
        throw ValidationError("agent " + a.name + ": weight for " + meta +
                              " is not its accessible contribution");
      }
    }
  }
  auto inst = detail::normalize_structure(raw);
  for (std::size_t l = 0; l < inst.num_meta(); ++l) {
    double sum = 0.0;
    for (std::size_t i = 0; i < inst.num_agents(); ++i) {
      if (inst.demands(i, l)) inst.weight(i, l) = inst.contribution(i, l);
      sum += inst.weight(i, l);
    }
    inst.phantom_weight[l] = std::max(0.0, 1.0 - sum);
  }
  recompute_dominant(inst);
  return inst;
}

// True when every agent lists contributions and its weights equal its
// accessible contributed units.
inline bool has_contribution_weights(const RawInstance& raw) {
  for (const auto& a : raw.agents) {
    if (!a.contributions) return false;
    for (const auto& [meta, units] : accessible_contribution_units(a)) {
      auto w = a.weights.find(meta);
      const double have = w == a.weights.end() ? 0.0 : w->second;
      if (std::abs(have - units) > 1e-9 * std::max(1.0, units)) return false;
    }
  }
  return !raw.agents.empty();
}

// Contribution-weighted normalization where it applies, plain otherwise.
inline NormalizedInstance normalize_auto(const RawInstance& raw) {
  return has_contribution_weights(raw) ? normalize_contribution_weighted(raw) : normalize(raw);
}

// ---------------------------------------------------------------------------
// Allocations and Leontief utility.

struct Allocation {
  Matrix x;  // agent x resource, fraction of the meta-type's supply
  std::optional<std::vector<std::vector<std::int64_t>>> units;

  static Allocation zeros(const NormalizedInstance& inst) {
    return Allocation{Matrix(inst.num_agents(), inst.num_resources()), std::nullopt};
  }
};

inline void check_dimensions(const NormalizedInstance& inst, const Allocation& alloc) {
  if (alloc.x.rows() != inst.num_agents() || alloc.x.cols() != inst.num_resources()) {
    throw std::invalid_argument("allocation is " + std::to_string(alloc.x.rows()) + "x" +
                                std::to_string(alloc.x.cols()) + ", instance needs " +
                                std::to_string(inst.num_agents()) + "x" +
                                std::to_string(inst.num_resources()));
  }
}

// Leontief utility computed from a single agent's bundle row.
template <class RowAccess>
double leontief(const NormalizedInstance& inst, std::size_t agent, RowAccess&& amount) {
  double u = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < inst.num_meta(); ++l) {
    if (!inst.demands(agent, l)) continue;
    double got = 0.0;
    for (std::size_t r : inst.groups[agent][l]) got += amount(r);
    u = std::min(u, got / inst.demand(agent, l));
  }
  return u;
}

// Units of work agent can complete: min over demanded groups of the group
// share divided by the per-unit demand. Resources outside the agent's
// groups are ignored.
inline double utility(const NormalizedInstance& inst, std::size_t agent, const Allocation& alloc) {
  check_dimensions(inst, alloc);
  if (agent >= inst.num_agents()) throw std::invalid_argument("utility: agent out of range");
  return leontief(inst, agent, [&](std::size_t r) { return alloc.x(agent, r); });
}

inline std::vector<double> utilities(const NormalizedInstance& inst, const Allocation& alloc) {
  std::vector<double> out(inst.num_agents());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = utility(inst, i, alloc);
  return out;
}

// Zeroes every entry outside the agent's demand groups.
inline Allocation strip_inaccessible(const NormalizedInstance& inst, Allocation alloc) {
  check_dimensions(inst, alloc);
  for (std::size_t i = 0; i < inst.num_agents(); ++i) {
    for (std::size_t r = 0; r < inst.num_resources(); ++r) {
      if (!inst.accessible(i, r)) alloc.x(i, r) = 0.0;
    }
  }
  return alloc;
}

// Fractional allocation from integer units.
inline Allocation from_units(const NormalizedInstance& inst,
                             const std::vector<std::vector<std::int64_t>>& units) {
  auto alloc = Allocation::zeros(inst);
  for (std::size_t i = 0; i < inst.num_agents(); ++i) {
    for (std::size_t r = 0; r < inst.num_resources(); ++r) {
      alloc.x(i, r) = static_cast<double>(units[i][r]) / inst.meta_unit_totals[inst.meta_of[r]];
    }
  }
  alloc.units = units;
  return alloc;
}

inline std::size_t agent_index(const NormalizedInstance& inst, const std::string& name) {
  auto it = std::find(inst.agent_names.begin(), inst.agent_names.end(), name);
  if (it == inst.agent_names.end()) throw ValidationError("unknown agent " + name);
  return static_cast<std::size_t>(it - inst.agent_names.begin());
}

inline std::size_t resource_index(const NormalizedInstance& inst, const std::string& id) {
  auto it = std::find(inst.resource_ids.begin(), inst.resource_ids.end(), id);
  if (it == inst.resource_ids.end()) throw ValidationError("unknown resource " + id);
  return static_cast<std::size_t>(it - inst.resource_ids.begin());
}

}  // namespace drfmt
