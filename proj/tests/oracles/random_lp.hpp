#pragma once

#include "drfmt/lp.hpp"
#include "drfmt/random.hpp"

namespace oracle {

// Small boxed LP with mixed relations; every variable gets an upper bound
// so vertex enumeration sees a polytope.
inline drfmt::lp::LpModel random_boxed_lp(drfmt::Rng& rng) {
  using namespace drfmt::lp;
  LpModel m;
  const std::size_t n = 1 + rng.index(6);
  const std::size_t k = 1 + rng.index(6);
  for (std::size_t j = 0; j < n; ++j) {
    const double lb = rng.bernoulli(0.2) ? static_cast<double>(rng.integer(-3, 0)) : 0.0;
    m.add_variable(static_cast<double>(rng.integer(-5, 5)) + rng.uniform(-0.5, 0.5), lb,
                   lb + rng.uniform(2.0, 10.0));
  }
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<Term> terms;
    for (std::size_t j = 0; j < n; ++j) {
      if (rng.bernoulli(0.7)) terms.push_back(Term{j, rng.uniform(-5.0, 5.0)});
    }
    const double u = rng.uniform();
    const Relation rel = u < 0.6 ? Relation::LessEqual : u < 0.9 ? Relation::GreaterEqual : Relation::Equal;
    m.add_constraint(std::move(terms), rel, rng.uniform(-8.0, 20.0), i);
  }
  return m;
}

}  // namespace oracle
