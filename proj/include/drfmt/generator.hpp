#pragma once

// Random instances: per agent and meta-type, a group size drawn uniformly
// from {0, ..., |meta-type|}, a random group of that size, and integer
// demand and weight in [1, 10]. Size 0 means the meta-type is not demanded.

#include <cstdint>
#include <string>
#include <vector>

#include "drfmt/model.hpp"
#include "drfmt/random.hpp"

namespace drfmt {

struct GeneratorConfig {
  std::vector<std::size_t> meta_structure{1, 2, 3, 4};
  std::int64_t supply_lo = 500;  // per agent
  std::int64_t supply_hi = 1000;
  std::int64_t value_lo = 1;     // demands and weights
  std::int64_t value_hi = 10;
};

inline RawInstance generate_instance(std::uint64_t seed, std::size_t n, const GeneratorConfig& cfg = {}) {
  if (n == 0) throw std::invalid_argument("generate_instance: n must be positive");
  if (cfg.meta_structure.empty()) throw std::invalid_argument("generate_instance: empty meta structure");
  Rng rng(seed);
  RawInstance raw;
  for (std::size_t l = 0; l < cfg.meta_structure.size(); ++l) {
    if (cfg.meta_structure[l] == 0) throw std::invalid_argument("generate_instance: empty meta-type");
    MetaTypeSpec mt{"M" + std::to_string(l), {}};
    for (std::size_t k = 0; k < cfg.meta_structure[l]; ++k) mt.resources.push_back({"", 0});
    raw.meta_types.push_back(std::move(mt));
  }
  std::size_t next_id = 0;
  const auto sn = static_cast<std::int64_t>(n);
  for (auto& mt : raw.meta_types) {
    for (auto& r : mt.resources) {
      r.id = "r" + std::to_string(next_id++);
      r.supply = rng.integer(sn * cfg.supply_lo, sn * cfg.supply_hi);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    AgentSpec a;
    a.name = "a" + std::to_string(i);
    while (a.demands.empty()) {
      a.weights.clear();
      a.groups.clear();
      for (const auto& mt : raw.meta_types) {
        const std::size_t size = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(mt.resources.size())));
        const double demand = static_cast<double>(rng.integer(cfg.value_lo, cfg.value_hi));
        a.weights[mt.name] = static_cast<double>(rng.integer(cfg.value_lo, cfg.value_hi));
        if (size == 0) continue;
        std::vector<std::string> ids;
        for (const auto& r : mt.resources) ids.push_back(r.id);
        a.groups[mt.name] = rng.subset(ids, size);
        a.demands[mt.name] = demand;
      }
    }
    raw.agents.push_back(std::move(a));
  }
  return raw;
}

// Splits every resource's full supply among all agents (each gets at least
// one unit) and sets weights to accessible contributed units.
inline RawInstance add_contributions(RawInstance raw, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = raw.agents.size();
  for (auto& a : raw.agents) a.contributions = std::map<std::string, double>{};
  for (const auto& mt : raw.meta_types) {
    for (const auto& r : mt.resources) {
      if (r.supply < static_cast<std::int64_t>(n)) {
        throw std::invalid_argument("add_contributions: supply of " + r.id + " below agent count");
      }
      std::vector<double> share(n);
      double total = 0.0;
      for (auto& s : share) total += (s = rng.uniform(0.0, 1.0));
      std::int64_t left = r.supply - static_cast<std::int64_t>(n);
      std::vector<std::int64_t> units(n, 1);
      const std::int64_t pool = left;
      for (std::size_t i = 0; i < n; ++i) {
        const auto extra = std::min(left, static_cast<std::int64_t>(static_cast<double>(pool) * share[i] / total));
        units[i] += extra;
        left -= extra;
      }
      units[rng.index(n)] += left;
      for (std::size_t i = 0; i < n; ++i) (*raw.agents[i].contributions)[r.id] = static_cast<double>(units[i]);
    }
  }
  return with_contribution_weights(std::move(raw));
}

}  // namespace drfmt
