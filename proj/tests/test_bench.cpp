#include <catch_amalgamated.hpp>

#include <sstream>

#include "drfmt/bench.hpp"
#include "drfmt/instance_json.hpp"

using namespace drfmt;
using Catch::Approx;

namespace {

BenchConfig small_config() {
  BenchConfig cfg;
  cfg.meta_structure = {1, 2};
  cfg.agent_counts = {3, 4};
  cfg.trials = 3;
  cfg.seed = 11;
  return cfg;
}

std::string csv(const std::vector<TrialRecord>& r) {
  std::ostringstream os;
  write_csv(os, r);
  return os.str();
}

}  // namespace

TEST_CASE("generated instances follow the sampling rules", "[bench][generator]") {
  GeneratorConfig cfg;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto raw = generate_instance(seed, 5, cfg);
    CHECK(validate(raw).empty());
    std::size_t resources = 0;
    for (const auto& mt : raw.meta_types) {
      for (const auto& r : mt.resources) {
        ++resources;
        CHECK(r.supply >= 2500);
        CHECK(r.supply <= 5000);
      }
    }
    CHECK(resources == 10);
    for (const auto& a : raw.agents) {
      CHECK_FALSE(a.demands.empty());
      for (const auto& [meta, d] : a.demands) {
        CHECK(d >= 1.0);
        CHECK(d <= 10.0);
        CHECK_FALSE(a.groups.at(meta).empty());
      }
    }
  }
  CHECK(serialize_instance(generate_instance(9, 5, cfg)) == serialize_instance(generate_instance(9, 5, cfg)));
  const auto solo = generate_instance(3, 1, cfg);
  REQUIRE(solo.agents.size() == 1);
  CHECK_FALSE(solo.agents[0].demands.empty());
}

TEST_CASE("trial sweep produces one record per mechanism and trial", "[bench]") {
  BenchConfig cfg;
  cfg.meta_structure = {1, 2};
  cfg.agent_counts = {5, 10};
  cfg.trials = 16;
  cfg.reference = ReferenceMode::None;
  const auto records = run_trials(cfg);
  CHECK(records.size() == 64);
  for (const auto& r : records) {
    CHECK(r.error.empty());
    CHECK(r.wall_ms >= 0.0);
    CHECK(r.social_welfare > 0.0);
    CHECK(r.rounds.has_value() == (r.mechanism == "drfmt"));
  }
  std::vector<double> rounds;
  for (const auto& r : records)
    if (r.rounds) rounds.push_back(static_cast<double>(*r.rounds));
  CHECK(quantile(rounds, 0.5) <= 3.0);
}

TEST_CASE("sweeps are deterministic across thread counts", "[bench]") {
  auto cfg = small_config();
  auto strip = [](std::vector<TrialRecord> r) {
    for (auto& x : r) x.wall_ms = 0.0;
    return r;
  };
  const auto a = strip(run_trials(cfg));
  cfg.threads = 4;
  const auto b = strip(run_trials(cfg));
  CHECK(csv(a) == csv(b));
  for (const auto& r : a) {
    CHECK(r.ref_kind == "mnw-pwl");
    CHECK(r.sw_ratio == Approx(r.social_welfare / r.sw_ref));
  }
}

TEST_CASE("tiny instances use the exact reference", "[bench]") {
  auto cfg = small_config();
  cfg.agent_counts = {3};
  cfg.supply_lo = 1;
  cfg.supply_hi = 3;
  cfg.mechanisms = {"drfmt"};
  for (const auto& r : run_trials(cfg)) {
    CHECK(r.ref_kind == "dmnw");
    CHECK(r.sw_ratio <= 1.0 + 1e-9);
  }
}

TEST_CASE("csv layout", "[bench]") {
  auto cfg = small_config();
  cfg.trials = 1;
  cfg.agent_counts = {3};
  const std::string text = csv(run_trials(cfg));
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);
  CHECK(line == "n,trial,seed,mechanism,wall_ms,rounds,social_welfare,norm_max_envy,sw_ref,sw_ratio,ref_kind");
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 10);
  }
  CHECK(rows == 2);
}

TEST_CASE("summaries", "[bench][summary]") {
  const auto records = run_trials(small_config());
  const auto s1 = summarize(records);
  const auto s2 = summarize(records);
  std::ostringstream a, b;
  write_summary_csv(a, s1);
  write_summary_csv(b, s2);
  CHECK(a.str() == b.str());
  CHECK(s1.size() == 4);

  TrialRecord one;
  one.n = 7;
  one.mechanism = "drfmt";
  one.wall_ms = 3.5;
  one.rounds = 2;
  one.social_welfare = 10.0;
  one.norm_max_envy = 0.25;
  one.sw_ref = 20.0;
  one.sw_ratio = 0.5;
  const auto single = summarize({one});
  REQUIRE(single.size() == 1);
  CHECK(single[0].wall_mean == 3.5);
  CHECK(single[0].wall_stddev == 0.0);
  CHECK(single[0].rounds_median == 2.0);
  CHECK(single[0].envy_p50 == 0.25);
  CHECK(single[0].envy_max == 0.25);
  CHECK(single[0].ratio_p05 == 0.5);
  CHECK(single[0].ratio_ge_090 == 0.0);
  CHECK(summarize({}).empty());
}

TEST_CASE("quantiles and slopes", "[bench][summary]") {
  CHECK(quantile({1, 2, 3, 4}, 0.5) == Approx(2.5));
  CHECK(quantile({5}, 0.9) == 5.0);
  std::vector<SummaryRow> rows;
  for (std::size_t n : {10, 20, 40}) {
    SummaryRow r;
    r.n = n;
    r.mechanism = "x";
    r.trials = 1;
    r.wall_mean = 0.5 * static_cast<double>(n * n);
    rows.push_back(r);
  }
  CHECK(*loglog_slope(rows, "x") == Approx(2.0));
  CHECK_FALSE(loglog_slope(rows, "y").has_value());
}

TEST_CASE("config parsing", "[bench][config]") {
  const auto cfg = parse_bench_config(
      R"({"meta_structure":[1,2],"agent_counts":[4],"trials":2,"seed":5,"mechanisms":["drfmt","alt"],)"
      R"("supply_range":[10,20],"grid_points":9,"threads":2,"reference":"none"})");
  CHECK(cfg.meta_structure == std::vector<std::size_t>{1, 2});
  CHECK(cfg.trials == 2);
  CHECK(cfg.supply_lo == 10);
  CHECK(cfg.reference == ReferenceMode::None);
  CHECK_THROWS_AS(parse_bench_config(R"({"trial":2})"), ParseError);
  CHECK_THROWS_AS(parse_bench_config(R"({"trials":0})"), ValidationError);
  CHECK_THROWS_AS(parse_bench_config(R"({"mechanisms":["magic"]})"), ValidationError);
  CHECK_THROWS_AS(parse_bench_config("{"), ParseError);
}

TEST_CASE("instance JSON round-trips generated instances", "[json][property]") {
  GeneratorConfig cfg;
  cfg.meta_structure = {1, 2, 3};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto raw = generate_instance(derive_seed(61, seed), 1 + seed % 9, cfg);
    if (seed % 2) raw = add_contributions(raw, seed);
    const std::string text = serialize_instance(raw);
    CHECK(serialize_instance(parse_instance(text)) == text);
  }
}
