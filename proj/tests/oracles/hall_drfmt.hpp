#pragma once

// LP-free DRF-MT trajectory for small instances.
//
// For fixed y, the meta-types decouple and each is a transportation problem:
// agent i ships c_il * (y or gamma_i) into its group, resources supply S_r.
// It is feasible iff every agent subset T has demand <= supply of the union
// of its groups. So the round optimum is the minimum over subsets containing
// an active agent of (S(N(T)) - fixed demand) / active coefficient, and an
// active agent is eliminated iff it belongs to a subset attaining it.

#include <cmath>
#include <limits>
#include <vector>

#include "drfmt/model.hpp"

namespace oracle {

struct HallRound {
  double y = 0.0;
  std::vector<std::size_t> eliminated;
};

struct HallTrajectory {
  std::vector<HallRound> rounds;
  std::vector<double> gamma;
  std::vector<double> utilities;
};

inline HallTrajectory hall_drfmt(const drfmt::NormalizedInstance& inst, double rel_tol = 1e-9) {
  const std::size_t n = inst.num_agents();
  if (n > 16) throw std::invalid_argument("hall_drfmt: too many agents");
  std::vector<bool> active(n, true);
  HallTrajectory out;
  out.gamma.assign(n, 0.0);
  std::size_t remaining = n;

  struct Cut {
    std::size_t l;
    unsigned mask;
    double room;    // supply minus fixed demand
    double active;  // sum of active coefficients
  };

  while (remaining > 0) {
    std::vector<Cut> cuts;
    double y = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < inst.num_meta(); ++l) {
      for (unsigned mask = 1; mask < (1u << n); ++mask) {
        std::vector<bool> covered(inst.num_resources(), false);
        double fixed = 0.0, act = 0.0;
        bool ok = true;
        for (std::size_t i = 0; i < n && ok; ++i) {
          if (!(mask >> i & 1u)) continue;
          if (!inst.demands(i, l)) {
            ok = false;
            break;
          }
          for (std::size_t r : inst.groups[i][l]) covered[r] = true;
          const double c = inst.share_coefficient(i, l);
          if (active[i]) act += c;
          else fixed += out.gamma[i] * c;
        }
        if (!ok || act == 0.0) continue;
        double supply = 0.0;
        for (std::size_t r = 0; r < covered.size(); ++r)
          if (covered[r]) supply += inst.supply[r];
        cuts.push_back({l, mask, supply - fixed, act});
        y = std::min(y, (supply - fixed) / act);
      }
    }
    HallRound round{y, {}};
    std::vector<bool> elim(n, false);
    for (const auto& c : cuts) {
      if (c.room - y * c.active > rel_tol * std::max(1.0, c.room)) continue;
      for (std::size_t i = 0; i < n; ++i)
        if ((c.mask >> i & 1u) && active[i]) elim[i] = true;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!elim[i]) continue;
      round.eliminated.push_back(i);
      active[i] = false;
      out.gamma[i] = y;
      --remaining;
    }
    if (round.eliminated.empty()) throw std::logic_error("hall_drfmt: no tight subset");
    out.rounds.push_back(round);
  }
  out.utilities.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.utilities[i] = out.gamma[i] * inst.dominant[i].weight / inst.dominant[i].demand;
  }
  return out;
}

}  // namespace oracle
