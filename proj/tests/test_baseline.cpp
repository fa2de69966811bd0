#include <catch_amalgamated.hpp>

#include "drfmt/baseline.hpp"
#include "drfmt/fairness.hpp"
#include "drfmt/generator.hpp"

using namespace drfmt;
using Catch::Approx;

namespace {

NormalizedInstance load(const char* file) {
  return normalize(load_instance(std::string(DRFMT_DATA_DIR "/") + file));
}

RawInstance one_resource(std::int64_t supply, std::size_t agents) {
  RawInstance raw;
  raw.meta_types.push_back({"m", {{"r", supply}}});
  for (std::size_t i = 0; i < agents; ++i) {
    raw.agents.push_back({"a" + std::to_string(i), {{"m", 1}}, {{"m", 1}}, {{"m", {"r"}}}, std::nullopt});
  }
  return raw;
}

// Nash optimum over a grid for 2 agents: agent 0 takes k/res of every
// resource, agent 1 the rest.
double grid_nash(const NormalizedInstance& inst, int res) {
  double best = -std::numeric_limits<double>::infinity();
  const std::size_t m = inst.num_resources();
  std::vector<int> step(m, 0);
  for (;;) {
    auto a = Allocation::zeros(inst);
    for (std::size_t r = 0; r < m; ++r) {
      a.x(0, r) = inst.supply[r] * step[r] / res;
      a.x(1, r) = inst.supply[r] - a.x(0, r);
    }
    best = std::max(best, nash_objective(inst, utilities(inst, a)));
    std::size_t r = 0;
    while (r < m && ++step[r] > res) step[r++] = 0;
    if (r == m) return best;
  }
}

// Brute force over every unit matrix, including ones that leave units idle.
std::pair<std::size_t, double> brute_discrete(const NormalizedInstance& inst) {
  const std::size_t n = inst.num_agents(), m = inst.num_resources();
  std::vector<std::vector<std::int64_t>> units(n, std::vector<std::int64_t>(m, 0));
  std::pair<std::size_t, double> best{0, -std::numeric_limits<double>::infinity()};
  auto rec = [&](auto& self, std::size_t cell) -> void {
    if (cell == n * m) {
      for (std::size_t r = 0; r < m; ++r) {
        std::int64_t s = 0;
        for (std::size_t i = 0; i < n; ++i) s += units[i][r];
        if (s > inst.raw_supply[r]) return;
      }
      auto u = utilities(inst, from_units(inst, units));
      std::size_t pos = 0;
      double obj = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (u[i] > 0) {
          ++pos;
          obj += agent_weight(inst, i) * std::log(u[i]);
        }
      if (pos > best.first || (pos == best.first && obj > best.second + 1e-12)) best = {pos, obj};
      return;
    }
    const std::size_t i = cell / m, r = cell % m;
    const std::int64_t top = inst.accessible(i, r) ? inst.raw_supply[r] : 0;
    for (std::int64_t v = 0; v <= top; ++v) {
      units[i][r] = v;
      self(self, cell + 1);
    }
    units[i][r] = 0;
  };
  rec(rec, 0);
  return best;
}

GeneratorConfig tiny_config() {
  GeneratorConfig cfg;
  cfg.meta_structure = {1, 2};
  cfg.supply_lo = 1;
  cfg.supply_hi = 4;
  return cfg;
}

}  // namespace

TEST_CASE("identical agents split a single resource", "[baseline][mnw]") {
  auto inst = normalize(one_resource(10, 2));
  auto res = solve_mnw_pwl(inst);
  CHECK(res.allocation.x(0, 0) == Approx(0.5).margin(1e-3));
  CHECK(res.allocation.x(1, 0) == Approx(0.5).margin(1e-3));
}

TEST_CASE("refinement never lowers the PWL objective", "[baseline][mnw][property]") {
  GeneratorConfig cfg;
  cfg.meta_structure = {1, 2};
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    auto inst = normalize(generate_instance(derive_seed(37, seed), 3 + seed, cfg));
    double prev = -std::numeric_limits<double>::infinity();
    for (std::size_t passes = 0; passes <= 4; ++passes) {
      MnwConfig mc;
      mc.refine_passes = passes;
      const auto res = solve_mnw_pwl(inst, mc);
      CHECK(res.pwl_objective >= prev - 1e-9);
      CHECK(res.pwl_objective <= res.nash_objective + 1e-9);
      prev = res.pwl_objective;
    }
  }
}

TEST_CASE("a lone agent gets its standalone maximum", "[baseline][mnw]") {
  RawInstance raw;
  raw.meta_types.push_back({"m", {{"p", 6}, {"q", 6}}});
  raw.meta_types.push_back({"k", {{"s", 5}}});
  raw.agents.push_back({"solo", {{"m", 1}, {"k", 1}}, {{"m", 2}, {"k", 1}}, {{"m", {"p", "q"}}, {"k", {"s"}}}, std::nullopt});
  auto inst = normalize(raw);
  CHECK(standalone_max_utility(inst, 0) == Approx(5.0));
  auto res = solve_mnw_pwl(inst);
  CHECK(res.utilities[0] == Approx(5.0).epsilon(1e-9));
}

TEST_CASE("PWL MNW matches a grid-search Nash optimum", "[baseline][mnw][oracle]") {
  Rng rng(31);
  for (int trial = 0; trial < 25; ++trial) {
    RawInstance raw;
    raw.meta_types.push_back({"m", {{"p", rng.integer(5, 20)}, {"q", rng.integer(5, 20)}}});
    for (const char* name : {"a", "b"}) {
      std::vector<std::vector<std::string>> groups{{"p"}, {"q"}, {"p", "q"}};
      raw.agents.push_back({name, {{"m", static_cast<double>(rng.integer(1, 5))}},
                            {{"m", static_cast<double>(rng.integer(1, 5))}}, {{"m", groups[rng.index(3)]}},
                            std::nullopt});
    }
    auto inst = normalize(raw);
    MnwConfig cfg;
    cfg.grid_points = 64;
    auto res = solve_mnw_pwl(inst, cfg);
    const double oracle = grid_nash(inst, 1000);
    INFO("trial " << trial);
    // Products of utilities within 1%.
    CHECK(std::exp(res.nash_objective - oracle) >= 0.99);
    CHECK(res.nash_objective <= oracle + 1e-3);
  }
}

TEST_CASE("PWL objective grows along nested grids", "[baseline][mnw][property]") {
  GeneratorConfig cfg;
  cfg.meta_structure = {1, 2, 3};
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    auto inst = normalize(generate_instance(derive_seed(41, seed), 4 + seed % 5, cfg));
    double prev = -std::numeric_limits<double>::infinity();
    for (std::size_t g : {8, 15, 29, 57}) {
      MnwConfig mc;
      mc.grid_points = g;
      mc.refine_passes = 0;
      const double obj = solve_mnw_pwl(inst, mc).pwl_objective;
      CHECK(obj >= prev - 1e-9);
      prev = obj;
    }
  }
}

TEST_CASE("PWL MNW is nearly envy-free without accessibility limits", "[baseline][mnw][property]") {
  GeneratorConfig cfg;
  cfg.meta_structure = {1, 2, 3};
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    auto raw = generate_instance(derive_seed(43, seed), 3 + seed % 6, cfg);
    for (auto& a : raw.agents) {
      const double w = a.weights.begin()->second;
      for (auto& [meta, v] : a.weights) v = w;
      for (auto& [meta, g] : a.groups) {
        g.clear();
        for (const auto& mt : raw.meta_types)
          if (mt.name == meta)
            for (const auto& r : mt.resources) g.push_back(r.id);
      }
    }
    auto inst = normalize(raw);
    MnwConfig mc;
    mc.grid_points = 64;
    auto res = solve_mnw_pwl(inst, mc);
    INFO("seed " << seed);
    CHECK(normalized_max_envy(inst, res.allocation).value <= 0.05);
  }
}

TEST_CASE("configuration is checked", "[baseline][mnw]") {
  auto inst = normalize(one_resource(4, 2));
  MnwConfig cfg;
  cfg.grid_points = 4;
  CHECK_THROWS_AS(solve_mnw_pwl(inst, cfg), std::invalid_argument);
}

TEST_CASE("discrete MNW small cases", "[baseline][dmnw]") {
  auto two = normalize(one_resource(2, 2));
  auto r = solve_discrete_mnw_exhaustive(two);
  REQUIRE(r.allocation.units);
  CHECK((*r.allocation.units)[0][0] == 1);
  CHECK((*r.allocation.units)[1][0] == 1);

  auto solo = normalize(one_resource(7, 1));
  CHECK((*solve_discrete_mnw_exhaustive(solo).allocation.units)[0][0] == 7);

  CHECK_THROWS_AS(solve_discrete_mnw_exhaustive(normalize(one_resource(13, 2))), InstanceTooLarge);
  CHECK_NOTHROW(solve_discrete_mnw_exhaustive(normalize(one_resource(13, 2)), 20));
}

TEST_CASE("discrete MNW agrees with unrestricted brute force", "[baseline][dmnw][oracle]") {
  GeneratorConfig cfg;
  cfg.meta_structure = {1, 1};
  cfg.supply_lo = 1;
  cfg.supply_hi = 2;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto inst = normalize(generate_instance(derive_seed(47, seed), 2, cfg));
    auto r = solve_discrete_mnw_exhaustive(inst);
    auto b = brute_discrete(inst);
    INFO("seed " << seed);
    CHECK(r.positive == b.first);
    if (b.first > 0) CHECK(r.nash_objective == Approx(b.second).margin(1e-9));
  }
}

TEST_CASE("discrete MNW dominates rounded allocations", "[baseline][dmnw][property]") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto inst = normalize(generate_instance(derive_seed(53, seed), 3, tiny_config()));
    auto best = solve_discrete_mnw_exhaustive(inst);
    for (const auto& cand : {round_down(inst, solve_mnw_pwl(inst).allocation), round_down(inst, run(inst))}) {
      auto u = utilities(inst, cand);
      std::size_t pos = 0;
      double obj = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i)
        if (u[i] > 0) {
          ++pos;
          obj += agent_weight(inst, i) * std::log(u[i]);
        }
      INFO("seed " << seed);
      CHECK((best.positive > pos || (best.positive == pos && best.nash_objective >= obj - 1e-9)));
    }
  }
}

TEST_CASE("social welfare figures", "[baseline][welfare]") {
  auto ex = load("hospitals.json");
  auto res = run(ex);
  CHECK(social_welfare(ex, res.fractional) == Approx(700.0).margin(1e-4));
  auto mod = load("hospitals_skewed.json");
  const double prop_sw = social_welfare(mod, proportional_allocation(mod));
  CHECK(prop_sw == Approx(193.75).margin(1e-6));
  CHECK(prop_sw < 200.0);
  CHECK(*normalized_sw_diff(ex, res.fractional, res.fractional) == 0.0);
  CHECK_FALSE(normalized_sw_diff(ex, res.fractional, Allocation::zeros(ex)).has_value());
  CHECK(*normalized_sw_diff(90.0, 100.0) == Approx(-0.1));
}
