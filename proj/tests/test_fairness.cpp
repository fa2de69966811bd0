#include <catch_amalgamated.hpp>

#include "drfmt/fairness.hpp"
#include "drfmt/generator.hpp"
#include "oracles/subset_min.hpp"

using namespace drfmt;
using Catch::Approx;

namespace {

RawInstance raw_file(const char* file) { return load_instance(std::string(DRFMT_DATA_DIR "/") + file); }
NormalizedInstance load(const char* file) { return normalize(raw_file(file)); }

GeneratorConfig small_structure() {
  GeneratorConfig cfg;
  cfg.meta_structure = {1, 2, 3};
  return cfg;
}

RawInstance two_identical(std::int64_t supply) {
  RawInstance raw;
  raw.meta_types.push_back({"m", {{"r", supply}}});
  for (const char* name : {"a", "b"}) {
    raw.agents.push_back({name, {{"m", 1}}, {{"m", 1}}, {{"m", {"r"}}}, std::nullopt});
  }
  return raw;
}

// Exhaustive search over allocations on a grid for 2 agents: agent 0 takes
// k/res of each resource it can use, agent 1 takes the rest.
bool grid_finds_improvement(const NormalizedInstance& inst, const Allocation& alloc, int res) {
  const auto base = utilities(inst, alloc);
  const std::size_t m = inst.num_resources();
  std::vector<int> step(m, 0);
  for (;;) {
    auto cand = Allocation::zeros(inst);
    for (std::size_t r = 0; r < m; ++r) {
      cand.x(0, r) = inst.supply[r] * step[r] / res;
      cand.x(1, r) = inst.supply[r] - cand.x(0, r);
    }
    auto u = utilities(inst, cand);
    bool weakly = true;
    double gain = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
      weakly = weakly && u[i] >= base[i] - 1e-12;
      gain += u[i] - base[i];
    }
    if (weakly && gain > 1e-6) return true;
    std::size_t r = 0;
    while (r < m && ++step[r] > res) step[r++] = 0;
    if (r == m) return false;
  }
}

}  // namespace

TEST_CASE("hospital fairness verdicts", "[fairness][example]") {
  auto inst = load("hospitals.json");
  auto res = run(inst);
  auto envy = envy_matrix(inst, res.fractional);
  CHECK(envy.max() <= 1e-6);
  for (std::size_t i = 0; i < 3; ++i) CHECK(envy.envy(i, i) == 0.0);
  CHECK(normalized_max_envy(inst, res.fractional).value == 0.0);
  CHECK(check_pareto(inst, res.fractional).is_pareto);

  auto prop = check_proportionality(inst, res.fractional);
  CHECK(prop[0].benchmark == Approx(62.5).margin(1e-6));
  CHECK(prop[1].benchmark == Approx(31.25).margin(1e-6));
  CHECK(prop[2].benchmark == Approx(250.0).margin(1e-6));
  CHECK(all_ok(prop));

  auto a1 = check_assumption1(inst);
  CHECK(a1.holds);
  CHECK(a1.y_hat == Approx(1.0));
  // N' = {H3} on nurses: (1/2) / (1/2 * 1) = 1.
  auto brute = oracle::subset_minimum(inst);
  CHECK(a1.lhs_min == Approx(brute.value).epsilon(1e-9));
  CHECK(brute.value == Approx(1.0));
}

TEST_CASE("modified weights break proportionality", "[fairness][example]") {
  auto inst = load("hospitals_skewed.json");
  auto prop_alloc = proportional_allocation(inst);
  auto u = utilities(inst, prop_alloc);
  CHECK(u[0] == Approx(122.5).margin(1e-6));
  CHECK(u[1] == Approx(61.25).margin(1e-6));
  CHECK(u[2] == Approx(10.0).margin(1e-6));

  auto res = run(inst);
  auto prop = check_proportionality(inst, res.fractional);
  CHECK_FALSE(prop[0].ok);
  CHECK(prop[1].ok);
  CHECK(prop[2].ok);

  auto a1 = check_assumption1(inst);
  CHECK_FALSE(a1.holds);
  auto brute = oracle::subset_minimum(inst);
  CHECK(a1.lhs_min == Approx(brute.value).epsilon(1e-9));
  CHECK(brute.mask == 0b011u);
  CHECK(brute.meta == 1);
  CHECK(brute.value == Approx(0.5 / (0.49 + 0.49 / 4)));
}

TEST_CASE("assumption 1 checker agrees with subset enumeration", "[fairness][oracle]") {
  std::size_t holds = 0;
  for (std::uint64_t seed = 0; seed < 150; ++seed) {
    auto inst = normalize(generate_instance(derive_seed(21, seed), 1 + seed % 6, small_structure()));
    auto a1 = check_assumption1(inst);
    auto brute = oracle::subset_minimum(inst);
    INFO("seed " << seed);
    CHECK(a1.lhs_min == Approx(brute.value).epsilon(1e-9));
    CHECK(a1.holds == (brute.value >= a1.y_hat - 1e-9));
    holds += a1.holds;
    if (a1.holds) CHECK(all_ok(check_proportionality(inst, run(inst).fractional)));
  }
  CHECK(holds > 0);
}

TEST_CASE("single agent satisfies assumption 1", "[fairness]") {
  RawInstance raw;
  raw.meta_types.push_back({"m", {{"r", 4}, {"s", 6}}});
  raw.agents.push_back({"solo", {{"m", 3}}, {{"m", 2}}, {{"m", {"r", "s"}}}, std::nullopt});
  auto inst = normalize(raw);
  CHECK(check_assumption1(inst).holds);
  auto prop = check_proportionality(inst, run(inst).fractional);
  CHECK(prop[0].benchmark == Approx(5.0));
  CHECK(prop[0].ok);
}

TEST_CASE("envy on hand-built allocations", "[fairness][envy]") {
  auto inst = normalize(two_identical(10));
  auto alloc = Allocation::zeros(inst);
  alloc.x(0, 0) = 1.0;
  auto e = envy_matrix(inst, alloc);
  CHECK(e.envy(1, 0) == Approx(10.0));
  CHECK(e.envy(0, 1) == 0.0);
  auto ne = normalized_max_envy(inst, alloc);
  CHECK(ne.unbounded);
  CHECK(std::isinf(ne.value));

  alloc.x(0, 0) = alloc.x(1, 0) = 0.5;
  CHECK(envy_matrix(inst, alloc).max() == 0.0);
  CHECK(normalized_max_envy(inst, alloc).value == 0.0);

  alloc.x(0, 0) = 0.6;
  alloc.x(1, 0) = 0.4;
  CHECK(normalized_max_envy(inst, alloc).value == Approx(0.5));
}

TEST_CASE("zero weight pairs are flagged, not divided", "[fairness][envy]") {
  RawInstance raw;
  raw.meta_types.push_back({"m", {{"r", 10}}});
  raw.meta_types.push_back({"k", {{"s", 10}}});
  raw.agents.push_back({"a", {{"m", 1}, {"k", 1}}, {{"m", 1}, {"k", 1}}, {{"m", {"r"}}, {"k", {"s"}}}, std::nullopt});
  raw.agents.push_back({"b", {{"m", 1}}, {{"m", 1}}, {{"m", {"r"}}}, std::nullopt});
  auto inst = normalize(raw);
  auto res = run(inst);
  auto e = envy_matrix(inst, res.fractional);
  REQUIRE(e.zero_weight_pairs.size() == 1);
  CHECK(e.zero_weight_pairs[0] == std::pair<std::size_t, std::size_t>{0, 1});
  CHECK(e.max() <= 1e-6);
}

TEST_CASE("pareto check", "[fairness][pareto]") {
  auto inst = load("hospitals.json");
  auto zero = Allocation::zeros(inst);
  auto p = check_pareto(inst, zero);
  CHECK_FALSE(p.is_pareto);
  REQUIRE(p.certificate);

  auto res = run(inst);
  auto wasteful = res.fractional;
  for (std::size_t i = 0; i < 3; ++i) wasteful.x(i, 3) = 0.0;  // nobody gets D
  auto w = check_pareto(inst, wasteful);
  CHECK_FALSE(w.is_pareto);
  REQUIRE(w.certificate);
  auto before = utilities(inst, wasteful);
  auto after = utilities(inst, *w.certificate);
  double gain = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(after[i] >= before[i] - 1e-7);
    gain += after[i] - before[i];
  }
  CHECK(gain > 1e-6);
  CHECK(gain == Approx(w.improvement).epsilon(1e-6));
}

TEST_CASE("pareto LP agrees with grid search on 2x2 instances", "[fairness][pareto][oracle]") {
  Rng rng(8);
  std::size_t non_pareto = 0;
  for (int trial = 0; trial < 150; ++trial) {
    RawInstance raw;
    const bool one_meta = rng.bernoulli(0.5);
    if (one_meta) {
      raw.meta_types.push_back({"m", {{"p", 5}, {"q", 5}}});
    } else {
      raw.meta_types.push_back({"m", {{"p", 4}}});
      raw.meta_types.push_back({"k", {{"q", 8}}});
    }
    for (const char* name : {"a", "b"}) {
      AgentSpec a{name, {}, {}, {}, std::nullopt};
      if (one_meta) {
        a.weights["m"] = static_cast<double>(rng.integer(1, 3));
        a.demands["m"] = static_cast<double>(rng.integer(1, 3));
        std::vector<std::vector<std::string>> choices{{"p"}, {"q"}, {"p", "q"}};
        a.groups["m"] = choices[rng.index(3)];
      } else {
        a.weights = {{"m", 1.0}, {"k", 1.0}};
        a.demands["m"] = static_cast<double>(rng.integer(1, 3));
        a.demands["k"] = static_cast<double>(rng.integer(1, 3));
        a.groups = {{"m", {"p"}}, {"k", {"q"}}};
      }
      raw.agents.push_back(std::move(a));
    }
    auto inst = normalize(raw);
    // Coarse allocation on a grid that the oracle grid refines.
    auto alloc = Allocation::zeros(inst);
    for (std::size_t r = 0; r < 2; ++r) {
      const int a0 = static_cast<int>(rng.integer(0, 4));
      const int a1 = static_cast<int>(rng.integer(0, 4 - a0));
      alloc.x(0, r) = inst.supply[r] * a0 / 4;
      alloc.x(1, r) = inst.supply[r] * a1 / 4;
    }
    alloc = strip_inaccessible(inst, alloc);
    const bool lp_pareto = check_pareto(inst, alloc).is_pareto;
    const bool grid_improves = grid_finds_improvement(inst, alloc, 60);
    INFO("trial " << trial);
    CHECK(lp_pareto == !grid_improves);
    non_pareto += !lp_pareto;
  }
  CHECK(non_pareto > 0);
}

TEST_CASE("sharing incentive on pooled contributions", "[fairness][sharing]") {
  RawInstance raw;
  raw.meta_types.push_back({"cpu", {{"c0", 30}, {"c1", 30}, {"c2", 30}}});
  raw.meta_types.push_back({"mem", {{"m0", 60}}});
  const char* own[] = {"c0", "c1", "c2"};
  const double mem[] = {10, 20, 30};
  const double dcpu[] = {1, 2, 3};
  for (int i = 0; i < 3; ++i) {
    AgentSpec a{"p" + std::to_string(i), {}, {{"cpu", dcpu[i]}, {"mem", 1}}, {{"cpu", {own[i]}}, {"mem", {"m0"}}},
                std::map<std::string, double>{{own[i], 30}, {"m0", mem[i]}}};
    raw.agents.push_back(std::move(a));
  }
  raw = with_contribution_weights(raw);
  auto inst = normalize_contribution_weighted(raw);
  auto verdicts = check_sharing_incentive(raw);
  for (int i = 0; i < 3; ++i) {
    // Standalone: min(30 / d_cpu, own memory / 1).
    const double expect = std::min(30.0 / dcpu[i], mem[i]);
    CHECK(verdicts[i].benchmark == Approx(expect));
    CHECK(verdicts[i].ok);
  }
  CHECK(inst.phantom_weight[0] == Approx(0.0).margin(1e-12));

  SECTION("weights not derived from contributions are refused") {
    raw.agents[0].weights["cpu"] = 1;
    CHECK_THROWS_AS(check_sharing_incentive(raw), ValidationError);
  }
}

TEST_CASE("sharing incentive on generated pooled instances", "[fairness][sharing][property]") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    auto raw = add_contributions(generate_instance(derive_seed(5, seed), 2 + seed % 7, small_structure()), seed);
    CHECK(all_ok(check_sharing_incentive(raw)));
  }
}

TEST_CASE("single contributor", "[fairness][sharing]") {
  RawInstance raw;
  raw.meta_types.push_back({"m", {{"r", 10}, {"s", 10}}});
  raw.agents.push_back({"solo", {}, {{"m", 2}}, {{"m", {"r", "s"}}}, std::map<std::string, double>{{"r", 10}, {"s", 10}}});
  auto v = check_sharing_incentive(with_contribution_weights(raw));
  CHECK(v[0].benchmark == Approx(10.0));
  CHECK(v[0].achieved == Approx(10.0));
}

TEST_CASE("truthful report gains nothing", "[fairness][sp]") {
  auto inst = load("hospitals.json");
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(misreport_gain(inst, i, truthful_report(inst, i)).gain() == 0.0);
  }
}

TEST_CASE("group widening pays off only under the alternative variant", "[fairness][sp][variant]") {
  auto inst = load("widening.json");
  auto lie = truthful_report(inst, 1);
  lie.groups[0] = {0, 1};
  MechanismOptions alt;
  alt.variant = Variant::Alternative;
  auto g_alt = misreport_gain(inst, 1, lie, alt);
  CHECK(g_alt.gain() > 1e-5);
  auto g_std = misreport_gain(inst, 1, lie);
  CHECK(g_std.gain() <= 1e-5);

  auto rep = normalize(raw_file("widening.json"));
  auto lied = run(apply_misreport(rep, 1, lie), alt);
  CHECK(envy_matrix(inst, lied.fractional).envy(0, 1) > 1e-6);

  auto fuzz = strategyproofness_fuzz(inst, 1, 200, 4, alt);
  CHECK_FALSE(fuzz.violations.empty());
  CHECK(fuzz.failures.empty());
}

TEST_CASE("fuzzing finds no profitable misreport", "[fairness][sp][property]") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto inst = normalize(generate_instance(derive_seed(17, seed), 3 + seed % 5, small_structure()));
    const std::size_t agent = seed % inst.num_agents();
    auto f = strategyproofness_fuzz(inst, agent, 40, seed, {}, 2);
    INFO("seed " << seed);
    CHECK(f.violations.empty());
    CHECK(f.failures.empty());
    CHECK(f.max_gain <= 1e-5);
  }
  auto ex = load("hospitals.json");
  auto f = strategyproofness_fuzz(ex, 0, 200, 7);
  CHECK(f.violations.empty());
}

TEST_CASE("fuzzing is deterministic across thread counts", "[fairness][sp]") {
  auto inst = normalize(generate_instance(3, 5, small_structure()));
  auto a = strategyproofness_fuzz(inst, 2, 24, 9, {}, 1);
  auto b = strategyproofness_fuzz(inst, 2, 24, 9, {}, 4);
  CHECK(a.max_gain == b.max_gain);
  CHECK(a.violations.size() == b.violations.size());
}

TEST_CASE("envy-freeness and pareto hold on mechanism outputs", "[fairness][property]") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    auto inst = normalize(generate_instance(derive_seed(23, seed), 3 + seed % 10, small_structure()));
    auto res = run(inst);
    INFO("seed " << seed);
    CHECK(envy_matrix(inst, res.fractional).max() <= 1e-6);
    CHECK(check_pareto(inst, res.fractional).is_pareto);
  }
}

TEST_CASE("rounded allocations keep item envy within 2m", "[fairness][rounding]") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto inst = normalize(generate_instance(derive_seed(29, seed), 3 + seed % 10, small_structure()));
    auto rounded = round_down(inst, run(inst));
    auto items = item_envy(inst, rounded);
    for (std::size_t i = 0; i < inst.num_agents(); ++i)
      for (std::size_t j = 0; j < inst.num_agents(); ++j)
        CHECK(items(i, j) <= 2.0 * static_cast<double>(inst.num_resources()));
  }
}

TEST_CASE("report JSON", "[fairness][json]") {
  auto inst = load("hospitals.json");
  auto res = run(inst);
  FairnessReport rep;
  rep.envy = envy_matrix(inst, res.fractional);
  rep.normalized_envy = normalized_max_envy(inst, res.fractional);
  rep.pareto = check_pareto(inst, res.fractional);
  rep.proportionality = check_proportionality(inst, res.fractional);
  rep.assumption1 = check_assumption1(inst);
  auto j = report_to_json(inst, rep);
  CHECK(j["passed"] == true);
  CHECK(j["pareto"]["is_pareto"] == true);
  CHECK(j["proportionality"]["H2"]["u_prop"].get<double>() == Approx(31.25));
  CHECK(j["envy"]["H1"]["H1"] == 0.0);
}
