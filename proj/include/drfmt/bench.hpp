#pragma once

// Benchmark harness: random trials per agent count, per-mechanism metrics on
// rounded allocations, welfare against an exact or approximate reference,
// and grouped summaries.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "drfmt/baseline.hpp"
#include "drfmt/error.hpp"
#include "drfmt/fairness.hpp"
#include "drfmt/generator.hpp"
#include "drfmt/mechanism.hpp"
#include "drfmt/parallel.hpp"
#include "drfmt/random.hpp"

namespace drfmt {

inline const std::vector<std::string>& known_mechanisms() {
  static const std::vector<std::string> names{"drfmt", "alt", "mnw-pwl"};
  return names;
}

enum class ReferenceMode { Auto, None };

struct BenchConfig {
  std::vector<std::size_t> meta_structure{1, 2, 3, 4};
  std::vector<std::size_t> agent_counts{5, 10};
  std::size_t trials = 16;
  std::uint64_t seed = 1;
  std::vector<std::string> mechanisms{"drfmt", "mnw-pwl"};
  std::int64_t supply_lo = 500;
  std::int64_t supply_hi = 1000;
  std::size_t grid_points = MnwConfig{}.grid_points;
  std::size_t refine_passes = MnwConfig{}.refine_passes;
  std::size_t threads = 1;
  ReferenceMode reference = ReferenceMode::Auto;
  std::int64_t unit_cap = 12;  // Discrete MNW oracle limit
};

inline void check_config(const BenchConfig& cfg) {
  if (cfg.trials == 0) throw ValidationError("bench: trials must be at least 1");
  if (cfg.meta_structure.empty()) throw ValidationError("bench: meta_structure is empty");
  for (std::size_t s : cfg.meta_structure)
    if (s == 0) throw ValidationError("bench: meta-type sizes must be at least 1");
  if (cfg.agent_counts.empty()) throw ValidationError("bench: agent_counts is empty");
  for (std::size_t n : cfg.agent_counts)
    if (n == 0) throw ValidationError("bench: agent counts must be at least 1");
  for (const auto& m : cfg.mechanisms)
    if (std::find(known_mechanisms().begin(), known_mechanisms().end(), m) == known_mechanisms().end())
      throw ValidationError("bench: unknown mechanism '" + m + "'");
  if (cfg.supply_lo < 1 || cfg.supply_hi < cfg.supply_lo) throw ValidationError("bench: bad supply range");
  if (cfg.grid_points < 8) throw ValidationError("bench: grid_points must be at least 8");
}

inline BenchConfig bench_config_from_json(const nlohmann::ordered_json& j) {
  if (!j.is_object()) throw ParseError("bench config must be a JSON object");
  BenchConfig cfg;
  auto count = [](const nlohmann::ordered_json& v, const std::string& key) {
    if (!v.is_number_unsigned()) throw ParseError("bench config: '" + key + "' must be a non-negative integer");
    return v.get<std::uint64_t>();
  };
  auto counts = [&](const nlohmann::ordered_json& v, const std::string& key) {
    if (!v.is_array()) throw ParseError("bench config: '" + key + "' must be an array");
    std::vector<std::size_t> out;
    for (const auto& e : v) out.push_back(static_cast<std::size_t>(count(e, key)));
    return out;
  };
  for (const auto& [key, v] : j.items()) {
    if (key == "meta_structure") {
      cfg.meta_structure = counts(v, key);
    } else if (key == "agent_counts") {
      cfg.agent_counts = counts(v, key);
    } else if (key == "trials") {
      cfg.trials = count(v, key);
    } else if (key == "seed") {
      cfg.seed = count(v, key);
    } else if (key == "mechanisms") {
      if (!v.is_array()) throw ParseError("bench config: 'mechanisms' must be an array");
      cfg.mechanisms.clear();
      for (const auto& e : v) {
        if (!e.is_string()) throw ParseError("bench config: mechanism names must be strings");
        cfg.mechanisms.push_back(e.get<std::string>());
      }
    } else if (key == "supply_range") {
      const auto r = counts(v, key);
      if (r.size() != 2) throw ParseError("bench config: 'supply_range' needs two entries");
      cfg.supply_lo = static_cast<std::int64_t>(r[0]);
      cfg.supply_hi = static_cast<std::int64_t>(r[1]);
    } else if (key == "grid_points") {
      cfg.grid_points = count(v, key);
    } else if (key == "refine_passes") {
      cfg.refine_passes = count(v, key);
    } else if (key == "threads") {
      cfg.threads = count(v, key);
    } else if (key == "unit_cap") {
      cfg.unit_cap = static_cast<std::int64_t>(count(v, key));
    } else if (key == "reference") {
      if (v == "auto") {
        cfg.reference = ReferenceMode::Auto;
      } else if (v == "none") {
        cfg.reference = ReferenceMode::None;
      } else {
        throw ParseError("bench config: 'reference' must be \"auto\" or \"none\"");
      }
    } else {
      throw ParseError("bench config: unknown field '" + key + "'");
    }
  }
  check_config(cfg);
  return cfg;
}

inline BenchConfig parse_bench_config(const std::string& text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("bench config: ") + e.what());
  }
  return bench_config_from_json(j);
}

struct TrialRecord {
  std::size_t n = 0;
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::string mechanism;
  double wall_ms = 0.0;
  std::optional<std::size_t> rounds;  // DRF-MT variants only
  double social_welfare = std::numeric_limits<double>::quiet_NaN();
  double norm_max_envy = std::numeric_limits<double>::quiet_NaN();
  double sw_ref = std::numeric_limits<double>::quiet_NaN();
  double sw_ratio = std::numeric_limits<double>::quiet_NaN();
  std::string ref_kind = "none";  // dmnw, mnw-pwl, none or error
  std::string error;              // empty when the mechanism succeeded
};

namespace detail {

struct MechanismRun {
  Allocation rounded;
  double wall_ms = 0.0;
  std::optional<std::size_t> rounds;
};

inline MechanismRun run_mechanism(const NormalizedInstance& inst, const std::string& name, const BenchConfig& cfg) {
  MechanismRun out;
  const auto start = std::chrono::steady_clock::now();
  Allocation fractional;
  if (name == "drfmt" || name == "alt") {
    const auto res = name == "drfmt" ? run(inst) : run_alternative_variant(inst);
    out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    out.rounds = res.rounds.size();
    fractional = res.fractional;
  } else {
    MnwConfig mc;
    mc.grid_points = cfg.grid_points;
    mc.refine_passes = cfg.refine_passes;
    fractional = solve_mnw_pwl(inst, mc).allocation;
    out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
  out.rounded = round_down(inst, fractional);
  return out;
}

}  // namespace detail

// One trial: every configured mechanism on one generated instance.
inline std::vector<TrialRecord> run_trial(const BenchConfig& cfg, std::size_t n, std::size_t trial) {
  GeneratorConfig gen;
  gen.meta_structure = cfg.meta_structure;
  gen.supply_lo = cfg.supply_lo;
  gen.supply_hi = cfg.supply_hi;
  const std::uint64_t seed = derive_seed(cfg.seed, n, trial);
  const auto inst = normalize(generate_instance(seed, n, gen));

  std::vector<TrialRecord> out;
  std::optional<double> pwl_sw;
  for (const auto& name : cfg.mechanisms) {
    TrialRecord rec;
    rec.n = n;
    rec.trial = trial;
    rec.seed = seed;
    rec.mechanism = name;
    try {
      const auto run = detail::run_mechanism(inst, name, cfg);
      rec.wall_ms = run.wall_ms;
      rec.rounds = run.rounds;
      rec.social_welfare = social_welfare(inst, run.rounded);
      rec.norm_max_envy = normalized_max_envy(inst, run.rounded).value;
      if (name == "mnw-pwl") pwl_sw = rec.social_welfare;
    } catch (const std::exception& e) {
      rec.error = e.what();
    }
    out.push_back(std::move(rec));
  }

  if (cfg.reference == ReferenceMode::None) return out;
  double ref = std::numeric_limits<double>::quiet_NaN();
  std::string kind;
  try {
    ref = social_welfare(inst, solve_discrete_mnw_exhaustive(inst, cfg.unit_cap).allocation);
    kind = "dmnw";
  } catch (const InstanceTooLarge&) {
    try {
      if (!pwl_sw) {
        MnwConfig mc;
        mc.grid_points = cfg.grid_points;
        mc.refine_passes = cfg.refine_passes;
        pwl_sw = social_welfare(inst, round_down(inst, solve_mnw_pwl(inst, mc).allocation));
      }
      ref = *pwl_sw;
      kind = "mnw-pwl";
    } catch (const std::exception&) {
      kind = "error";
    }
  } catch (const std::exception&) {
    kind = "error";
  }
  for (auto& rec : out) {
    rec.ref_kind = kind;
    rec.sw_ref = ref;
    if (rec.error.empty() && std::isfinite(ref) && ref > 0.0) rec.sw_ratio = rec.social_welfare / ref;
  }
  return out;
}

// Records ordered by (n, trial, mechanism order) whatever the thread count.
inline std::vector<TrialRecord> run_trials(const BenchConfig& cfg) {
  check_config(cfg);
  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  for (std::size_t n : cfg.agent_counts)
    for (std::size_t t = 0; t < cfg.trials; ++t) jobs.emplace_back(n, t);
  std::vector<std::vector<TrialRecord>> slots(jobs.size());
  parallel_for(jobs.size(), cfg.threads, [&](std::size_t k) { slots[k] = run_trial(cfg, jobs[k].first, jobs[k].second); });
  std::vector<TrialRecord> out;
  for (auto& s : slots)
    for (auto& r : s) out.push_back(std::move(r));
  return out;
}

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

inline const char* kCsvHeader = "n,trial,seed,mechanism,wall_ms,rounds,social_welfare,norm_max_envy,sw_ref,sw_ratio,ref_kind";

inline void write_csv(std::ostream& os, const std::vector<TrialRecord>& records) {
  os << kCsvHeader << '\n';
  for (const auto& r : records) {
    os << r.n << ',' << r.trial << ',' << r.seed << ',' << r.mechanism << ',' << format_number(r.wall_ms) << ','
       << (r.rounds ? std::to_string(*r.rounds) : "") << ',' << format_number(r.social_welfare) << ','
       << format_number(r.norm_max_envy) << ',' << format_number(r.sw_ref) << ',' << format_number(r.sw_ratio) << ','
       << (r.error.empty() ? r.ref_kind : "error") << '\n';
  }
}

// ---------------------------------------------------------------------------
// Summaries.

// Linear interpolation between order statistics; nan for an empty sample.
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  if (std::isinf(v[lo]) || std::isinf(v[hi])) return v[hi];
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct SummaryRow {
  std::size_t n = 0;
  std::string mechanism;
  std::size_t trials = 0;
  std::size_t failures = 0;
  double wall_mean = 0.0;
  double wall_stddev = 0.0;
  double rounds_median = std::numeric_limits<double>::quiet_NaN();
  double envy_p50 = 0.0;
  double envy_p90 = 0.0;
  double envy_max = 0.0;
  double ratio_p05 = std::numeric_limits<double>::quiet_NaN();
  double ratio_p50 = std::numeric_limits<double>::quiet_NaN();
  double ratio_ge_090 = std::numeric_limits<double>::quiet_NaN();  // fraction with sw_ratio >= 0.9
};

// Groups by (n, mechanism) in order of first appearance of n and mechanism.
inline std::vector<SummaryRow> summarize(const std::vector<TrialRecord>& records) {
  std::vector<std::size_t> ns;
  std::vector<std::string> mechs;
  for (const auto& r : records) {
    if (std::find(ns.begin(), ns.end(), r.n) == ns.end()) ns.push_back(r.n);
    if (std::find(mechs.begin(), mechs.end(), r.mechanism) == mechs.end()) mechs.push_back(r.mechanism);
  }
  std::sort(ns.begin(), ns.end());
  std::vector<SummaryRow> out;
  for (std::size_t n : ns) {
    for (const auto& mech : mechs) {
      SummaryRow row;
      row.n = n;
      row.mechanism = mech;
      std::vector<double> wall, rounds, envy, ratio;
      for (const auto& r : records) {
        if (r.n != n || r.mechanism != mech) continue;
        ++row.trials;
        if (!r.error.empty()) {
          ++row.failures;
          continue;
        }
        wall.push_back(r.wall_ms);
        if (r.rounds) rounds.push_back(static_cast<double>(*r.rounds));
        envy.push_back(r.norm_max_envy);
        if (!std::isnan(r.sw_ratio)) ratio.push_back(r.sw_ratio);
      }
      if (row.trials == 0) continue;
      if (!wall.empty()) {
        double s = 0.0;
        for (double w : wall) s += w;
        row.wall_mean = s / static_cast<double>(wall.size());
        double ss = 0.0;
        for (double w : wall) ss += (w - row.wall_mean) * (w - row.wall_mean);
        row.wall_stddev = wall.size() > 1 ? std::sqrt(ss / static_cast<double>(wall.size() - 1)) : 0.0;
      }
      row.rounds_median = quantile(rounds, 0.5);
      row.envy_p50 = quantile(envy, 0.5);
      row.envy_p90 = quantile(envy, 0.9);
      row.envy_max = quantile(envy, 1.0);
      if (!ratio.empty()) {
        row.ratio_p05 = quantile(ratio, 0.05);
        row.ratio_p50 = quantile(ratio, 0.5);
        std::size_t ok = 0;
        for (double v : ratio) ok += v >= 0.9;
        row.ratio_ge_090 = static_cast<double>(ok) / static_cast<double>(ratio.size());
      }
      out.push_back(row);
    }
  }
  return out;
}

inline void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
  os << "n,mechanism,trials,failures,wall_ms_mean,wall_ms_stddev,rounds_median,envy_p50,envy_p90,envy_max,"
        "sw_ratio_p05,sw_ratio_p50,sw_ratio_ge_0.9\n";
  for (const auto& r : rows) {
    os << r.n << ',' << r.mechanism << ',' << r.trials << ',' << r.failures << ',' << format_number(r.wall_mean) << ','
       << format_number(r.wall_stddev) << ',' << format_number(r.rounds_median) << ',' << format_number(r.envy_p50)
       << ',' << format_number(r.envy_p90) << ',' << format_number(r.envy_max) << ',' << format_number(r.ratio_p05)
       << ',' << format_number(r.ratio_p50) << ',' << format_number(r.ratio_ge_090) << '\n';
  }
}

inline void write_summary_text(std::ostream& os, const std::vector<SummaryRow>& rows) {
  auto cell = [](double v, int prec) {
    if (std::isnan(v)) return std::string("-");
    std::ostringstream s;
    s << std::fixed << std::setprecision(prec) << v;
    return std::isinf(v) ? format_number(v) : s.str();
  };
  os << std::left << std::setw(6) << "n" << std::setw(10) << "mech" << std::right << std::setw(7) << "trials"
     << std::setw(6) << "fail" << std::setw(12) << "ms mean" << std::setw(11) << "ms sd" << std::setw(8) << "rounds"
     << std::setw(11) << "envy p50" << std::setw(11) << "envy max" << std::setw(10) << "sw p05" << std::setw(10)
     << "sw p50" << std::setw(9) << ">=0.9" << '\n';
  for (const auto& r : rows) {
    os << std::left << std::setw(6) << r.n << std::setw(10) << r.mechanism << std::right << std::setw(7) << r.trials
       << std::setw(6) << r.failures << std::setw(12) << cell(r.wall_mean, 3) << std::setw(11)
       << cell(r.wall_stddev, 3) << std::setw(8) << cell(r.rounds_median, 1) << std::setw(11) << cell(r.envy_p50, 4)
       << std::setw(11) << cell(r.envy_max, 4) << std::setw(10) << cell(r.ratio_p05, 3) << std::setw(10)
       << cell(r.ratio_p50, 3) << std::setw(9) << cell(r.ratio_ge_090, 3) << '\n';
  }
}

// Least-squares slope of log(mean wall ms) against log(n) for one mechanism.
inline std::optional<double> loglog_slope(const std::vector<SummaryRow>& rows, const std::string& mechanism) {
  std::vector<double> xs, ys;
  for (const auto& r : rows) {
    if (r.mechanism != mechanism || r.failures == r.trials || !(r.wall_mean > 0.0)) continue;
    xs.push_back(std::log(static_cast<double>(r.n)));
    ys.push_back(std::log(r.wall_mean));
  }
  if (xs.size() < 2) return std::nullopt;
  const double k = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i] / k;
    my += ys[i] / k;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  if (sxx == 0.0) return std::nullopt;
  return sxy / sxx;
}

}  // namespace drfmt
