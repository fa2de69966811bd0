#pragma once

// Command-line front end. Exit codes: 0 success, 1 parse or validation
// error, 2 numerical failure, 3 invariant breach, 4 a requested check failed.

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "drfmt/drfmt.hpp"

namespace drfmt::cli {

enum ExitCode : int { kOk = 0, kInputError = 1, kNumerical = 2, kInvariant = 3, kCheckFailed = 4 };

struct Io {
  std::ostream& out;
  std::ostream& err;
  bool tty = false;  // plain tables instead of JSON
};

inline std::uint64_t default_seed() {
  if (const char* s = std::getenv("DRFMT_SEED")) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(s, &used);
      if (used == std::string(s).size()) return v;
    } catch (const std::exception&) {
    }
    throw ParseError(std::string("DRFMT_SEED is not an unsigned integer: ") + s);
  }
  return 1;
}

// Writes to `path`, or to `fallback` when path is empty or "-".
inline void emit(const std::string& path, std::ostream& fallback, const std::string& text) {
  if (path.empty() || path == "-") {
    fallback << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot write " + path);
  f << text;
}

inline std::string dump(const ojson& j) { return j.dump(2) + "\n"; }

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

inline MechanismResult run_variant(const NormalizedInstance& inst, const std::string& variant,
                                   const MechanismOptions& opt = {}) {
  if (variant == "drfmt") return run(inst, opt);
  if (variant == "alt") return run_alternative_variant(inst, opt);
  throw ParseError("unknown variant '" + variant + "'");
}

inline MechanismOptions variant_options(const std::string& variant) {
  MechanismOptions opt;
  if (variant == "alt") opt.variant = Variant::Alternative;
  return opt;
}

inline std::size_t resolve_agent(const NormalizedInstance& inst, const std::string& s) {
  if (!s.empty() && s.find_first_not_of("0123456789") == std::string::npos) {
    const auto k = std::stoull(s);
    if (k >= inst.num_agents()) throw ValidationError("agent index " + s + " out of range");
    return static_cast<std::size_t>(k);
  }
  return agent_index(inst, s);
}

inline std::string fixed(double v, int prec = 4) {
  if (!std::isfinite(v)) return format_number(v);
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Subcommands.

inline int cmd_validate(const Io& io, const std::string& file, bool json) {
  const auto raw = load_instance(file);
  const auto violations = validate(raw);
  if (json || !io.tty) {
    ojson j{{"valid", violations.empty()}, {"violations", ojson::array()}};
    for (const auto& v : violations) j["violations"].push_back(ojson{{"subject", v.subject}, {"message", v.message}});
    io.out << dump(j);
  } else if (violations.empty()) {
    io.out << "valid: " << raw.agents.size() << " agents, " << raw.meta_types.size() << " meta-types\n";
  } else {
    for (const auto& v : violations) io.out << v.subject << ": " << v.message << '\n';
  }
  return violations.empty() ? kOk : kInputError;
}

struct SolveArgs {
  std::string file;
  std::string output;
  std::string variant = "drfmt";
  bool rounded = false;
  bool trace = false;
  std::size_t grid_points = 32;
};

inline void print_utilities_table(std::ostream& os, const NormalizedInstance& inst, const std::vector<double>& u,
                                  const std::vector<double>* gamma = nullptr) {
  os << std::left << std::setw(16) << "agent" << std::right << std::setw(16) << "utility";
  if (gamma) os << std::setw(14) << "gamma";
  os << '\n';
  for (std::size_t i = 0; i < inst.num_agents(); ++i) {
    os << std::left << std::setw(16) << inst.agent_names[i] << std::right << std::setw(16) << fixed(u[i]);
    if (gamma) os << std::setw(14) << fixed((*gamma)[i], 6);
    os << '\n';
  }
}

// Sum of raw weights when it is the same for every meta-type. Dividing y by
// it expresses y against unnormalized weights.
inline std::optional<double> uniform_weight_total(const RawInstance& raw) {
  std::optional<double> total;
  for (const auto& mt : raw.meta_types) {
    double t = 0.0;
    for (const auto& ag : raw.agents) {
      auto w = ag.weights.find(mt.name);
      if (w != ag.weights.end()) t += w->second;
    }
    if (!(t > 0.0)) return std::nullopt;
    if (total && std::abs(*total - t) > 1e-12 * t) return std::nullopt;
    total = t;
  }
  return total;
}

inline int cmd_solve(const Io& io, const SolveArgs& a, bool json) {
  const auto raw = load_instance(a.file);
  const auto inst = normalize_auto(raw);
  const bool table = io.tty && !json && a.output.empty();
  std::ostringstream text;
  if (a.variant == "mnw-pwl") {
    MnwConfig cfg;
    cfg.grid_points = a.grid_points;
    const auto res = solve_mnw_pwl(inst, cfg);
    const auto alloc = a.rounded ? round_down(inst, res.allocation) : res.allocation;
    const auto u = utilities(inst, alloc);
    if (table) {
      text << "variant mnw-pwl, nash objective " << fixed(nash_objective(inst, u), 6) << '\n';
      print_utilities_table(text, inst, u);
    } else {
      ojson j;
      j["variant"] = "mnw-pwl";
      j["utilities"] = ojson::object();
      for (std::size_t i = 0; i < inst.num_agents(); ++i) j["utilities"][inst.agent_names[i]] = u[i];
      j["nash_objective"] = number_or_string(nash_objective(inst, u));
      j["pwl_objective"] = res.pwl_objective;
      j["allocation"] = allocation_to_json(inst, alloc);
      text << dump(j);
    }
  } else {
    auto opt = variant_options(a.variant);
    opt.trace = a.trace;
    const auto res = run_variant(inst, a.variant, opt);
    std::optional<Allocation> rounded;
    if (a.rounded) rounded = round_down(inst, res);
    if (table) {
      text << "variant " << a.variant << ", " << res.rounds.size() << " rounds\n";
      for (const auto& r : res.rounds) {
        text << "  round " << r.t << ": y = " << fixed(r.y_star, 6) << ", eliminated";
        for (const auto& e : r.eliminated) text << ' ' << inst.agent_names[e.agent];
        text << '\n';
      }
      print_utilities_table(text, inst, res.utilities, &res.gamma);
      if (rounded) {
        text << "rounded utilities:\n";
        print_utilities_table(text, inst, utilities(inst, *rounded));
      }
    } else {
      ojson j;
      j["variant"] = a.variant;
      ojson body = result_to_json(inst, res, rounded, a.trace);
      const auto total = has_contribution_weights(raw) ? std::nullopt : uniform_weight_total(raw);
      if (total) {
        for (auto& r : body["rounds"]) r["y_raw"] = r["y"].get<double>() / *total;
      }
      for (const auto& [k, v] : body.items()) j[k] = v;
      if (rounded) {
        j["rounded_utilities"] = ojson::object();
        const auto ru = utilities(inst, *rounded);
        for (std::size_t i = 0; i < inst.num_agents(); ++i) j["rounded_utilities"][inst.agent_names[i]] = ru[i];
      }
      text << dump(j);
    }
  }
  emit(a.output, io.out, text.str());
  return kOk;
}

struct VerifyArgs {
  std::string file;
  std::string allocation;
  std::string output;
  std::string checks;  // empty: ef,po,sp,si with si skipped if unavailable
  std::string variant = "drfmt";
  std::size_t trials = 50;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};

inline int cmd_verify(const Io& io, const VerifyArgs& a, bool json) {
  const auto raw = load_instance(a.file);
  const bool defaults = a.checks.empty();
  const auto checks = split_list(defaults ? "ef,po,sp,si" : a.checks);
  std::map<std::string, bool> want;
  for (const auto& c : checks) {
    if (c != "ef" && c != "po" && c != "sp" && c != "si" && c != "prop" && c != "a1") {
      throw ParseError("unknown check '" + c + "' (expected ef, po, sp, si, prop, a1)");
    }
    want[c] = true;
  }
  std::vector<std::pair<std::string, std::string>> skipped;
  if (want.count("si") && !has_contribution_weights(raw)) {
    if (!defaults) throw ValidationError("si needs contributions with weights equal to accessible contributions");
    want.erase("si");
    skipped.emplace_back("si", "instance has no contribution weights");
  }
  const auto inst = normalize_auto(raw);
  const auto opt = variant_options(a.variant);
  Allocation alloc = a.allocation.empty() ? run_variant(inst, a.variant, opt).fractional
                                          : parse_allocation(inst, read_text(a.allocation));

  FairnessReport rep;
  if (want.count("ef")) {
    rep.envy = envy_matrix(inst, alloc);
    rep.normalized_envy = normalized_max_envy(inst, alloc);
  }
  if (want.count("po")) rep.pareto = check_pareto(inst, alloc);
  if (want.count("si")) rep.sharing_incentive = check_sharing_incentive(inst, alloc);
  if (want.count("prop")) rep.proportionality = check_proportionality(inst, alloc);
  if (want.count("a1")) rep.assumption1 = check_assumption1(inst);
  if (want.count("sp")) {
    const std::uint64_t seed = a.seed ? *a.seed : default_seed();
    FuzzResult merged;
    for (std::size_t i = 0; i < inst.num_agents(); ++i) {
      auto f = strategyproofness_fuzz(inst, i, a.trials, derive_seed(seed, i), opt, a.threads);
      merged.trials += f.trials;
      merged.max_gain = std::max(merged.max_gain, f.max_gain);
      for (auto& v : f.violations) {
        v.description = inst.agent_names[i] + " reports " + v.description;
        merged.violations.push_back(v);
      }
      for (auto& v : f.failures) {
        v.description = inst.agent_names[i] + " reports " + v.description;
        merged.failures.push_back(v);
      }
    }
    rep.strategyproofness = merged;
  }
  const bool a1_ok = !rep.assumption1 || rep.assumption1->holds;
  const bool passed = rep.passed() && a1_ok;

  std::ostringstream text;
  if (io.tty && !json && a.output.empty()) {
    auto line = [&](const char* name, bool ok, const std::string& detail) {
      text << std::left << std::setw(20) << name << (ok ? "PASS" : "FAIL") << "  " << detail << '\n';
    };
    if (rep.envy) line("envy-free", rep.envy_free(), "max envy " + fixed(rep.envy->max(), 9));
    if (rep.pareto) line("pareto optimal", rep.pareto->is_pareto, "improvement " + fixed(rep.pareto->improvement, 9));
    if (rep.strategyproofness) {
      line("strategyproof", rep.strategyproofness->violations.empty() && rep.strategyproofness->failures.empty(),
           std::to_string(rep.strategyproofness->trials) + " misreports, max gain " +
               fixed(rep.strategyproofness->max_gain, 9));
    }
    if (rep.sharing_incentive) line("sharing incentive", all_ok(*rep.sharing_incentive), "");
    if (rep.proportionality) {
      std::string who;
      for (std::size_t i = 0; i < inst.num_agents(); ++i)
        if (!(*rep.proportionality)[i].ok) who += (who.empty() ? "short: " : ", ") + inst.agent_names[i];
      line("proportionality", all_ok(*rep.proportionality), who);
    }
    if (rep.assumption1) {
      line("assumption 1", rep.assumption1->holds,
           "min " + fixed(rep.assumption1->lhs_min, 6) + " vs " + fixed(rep.assumption1->y_hat, 6));
    }
    for (const auto& [c, why] : skipped) text << std::left << std::setw(20) << c << "SKIP  " << why << '\n';
  } else {
    ojson j = report_to_json(inst, rep);
    j["passed"] = passed;
    j["skipped"] = ojson::array();
    for (const auto& [c, why] : skipped) j["skipped"].push_back(ojson{{"check", c}, {"reason", why}});
    text << dump(j);
  }
  emit(a.output, io.out, text.str());
  return passed ? kOk : kCheckFailed;
}

struct FuzzArgs {
  std::string file;
  std::string agent = "0";
  std::size_t trials = 200;
  std::optional<std::uint64_t> seed;
  std::string variant = "drfmt";
  std::size_t threads = 1;
};

inline int cmd_fuzz(const Io& io, const FuzzArgs& a, bool json) {
  const auto inst = normalize_auto(load_instance(a.file));
  const std::size_t agent = resolve_agent(inst, a.agent);
  const std::uint64_t seed = a.seed ? *a.seed : default_seed();
  const auto res = strategyproofness_fuzz(inst, agent, a.trials, seed, variant_options(a.variant), a.threads);
  if (io.tty && !json) {
    io.out << inst.agent_names[agent] << ": " << res.trials << " misreports, " << res.violations.size()
           << " profitable, " << res.failures.size() << " failed, max gain " << fixed(res.max_gain, 9) << '\n';
    for (const auto& v : res.violations)
      io.out << "  trial " << v.trial << " gain " << fixed(v.gain, 6) << ": " << v.description << '\n';
  } else {
    ojson j{{"agent", inst.agent_names[agent]},
            {"trials", res.trials},
            {"seed", seed},
            {"truthful_utility", res.truthful_utility},
            {"max_gain", res.max_gain}};
    j["violations"] = ojson::array();
    for (const auto& v : res.violations)
      j["violations"].push_back(ojson{{"trial", v.trial}, {"gain", v.gain}, {"misreport", v.description}});
    j["failures"] = ojson::array();
    for (const auto& v : res.failures) j["failures"].push_back(ojson{{"trial", v.trial}, {"error", v.description}});
    io.out << dump(j);
  }
  return res.violations.empty() && res.failures.empty() ? kOk : kCheckFailed;
}

struct GenArgs {
  std::optional<std::uint64_t> seed;
  std::size_t n = 5;
  std::string structure = "1,2,3,4";
  bool contributions = false;
  std::string output;
};

inline int cmd_gen(const Io& io, const GenArgs& a) {
  GeneratorConfig cfg;
  cfg.meta_structure.clear();
  for (const auto& s : split_list(a.structure)) {
    if (s.find_first_not_of("0123456789") != std::string::npos) throw ParseError("bad structure entry '" + s + "'");
    cfg.meta_structure.push_back(std::stoull(s));
  }
  if (cfg.meta_structure.empty()) throw ParseError("structure is empty");
  for (std::size_t s : cfg.meta_structure)
    if (s == 0) throw ValidationError("meta-type sizes must be at least 1");
  if (a.n == 0) throw ValidationError("--n must be at least 1");
  const std::uint64_t seed = a.seed ? *a.seed : default_seed();
  auto raw = generate_instance(seed, a.n, cfg);
  if (a.contributions) raw = add_contributions(raw, derive_seed(seed, 1));
  emit(a.output, io.out, serialize_instance(raw) + "\n");
  return kOk;
}

struct BenchArgs {
  std::string config;
  std::string output;
  std::string summary_csv;
  std::optional<std::size_t> threads;
};

inline int cmd_bench(const Io& io, const BenchArgs& a) {
  const std::string text = read_text(a.config);
  auto cfg = parse_bench_config(text);
  const auto doc = nlohmann::ordered_json::parse(text);
  if (!doc.contains("seed")) cfg.seed = default_seed();
  if (a.threads) cfg.threads = *a.threads;
  const auto records = run_trials(cfg);
  std::ostringstream csv;
  write_csv(csv, records);
  emit(a.output, io.out, csv.str());
  const auto rows = summarize(records);
  if (!a.summary_csv.empty()) {
    std::ostringstream s;
    write_summary_csv(s, rows);
    emit(a.summary_csv, io.out, s.str());
  }
  // The summary table never mixes with CSV on the same stream.
  write_summary_text(a.output.empty() || a.output == "-" ? io.err : io.out, rows);
  return kOk;
}

inline int cmd_compare(const Io& io, const std::string& file, std::size_t grid_points, bool json) {
  const auto inst = normalize_auto(load_instance(file));
  struct Row {
    std::string name;
    std::optional<Allocation> alloc;
    std::string note;
  };
  std::vector<Row> rows;
  rows.push_back({"drfmt", run(inst).fractional, ""});
  rows.push_back({"alt", run_alternative_variant(inst).fractional, ""});
  MnwConfig mc;
  mc.grid_points = grid_points;
  rows.push_back({"mnw-pwl", solve_mnw_pwl(inst, mc).allocation, ""});
  rows.push_back({"proportional", proportional_allocation(inst), ""});
  try {
    rows.push_back({"dmnw", solve_discrete_mnw_exhaustive(inst).allocation, ""});
  } catch (const InstanceTooLarge& e) {
    rows.push_back({"dmnw", std::nullopt, e.what()});
  }

  ojson j;
  j["mechanisms"] = ojson::array();
  std::ostringstream text;
  if (io.tty && !json) {
    text << std::left << std::setw(14) << "mechanism" << std::right << std::setw(14) << "SW" << std::setw(14)
         << "SW rounded" << std::setw(14) << "norm envy" << std::setw(14) << "nash" << '\n';
  }
  for (const auto& r : rows) {
    if (!r.alloc) {
      if (io.tty && !json) text << std::left << std::setw(14) << r.name << "skipped: " << r.note << '\n';
      j["mechanisms"].push_back(ojson{{"name", r.name}, {"skipped", r.note}});
      continue;
    }
    const auto rounded = r.alloc->units ? *r.alloc : round_down(inst, *r.alloc);
    const double sw = social_welfare(inst, *r.alloc);
    const double swr = social_welfare(inst, rounded);
    const double envy = normalized_max_envy(inst, *r.alloc).value;
    const double nash = nash_objective(inst, utilities(inst, *r.alloc));
    if (io.tty && !json) {
      text << std::left << std::setw(14) << r.name << std::right << std::setw(14) << fixed(sw, 3) << std::setw(14)
           << fixed(swr, 3) << std::setw(14) << fixed(envy, 6) << std::setw(14) << fixed(nash, 4) << '\n';
    }
    j["mechanisms"].push_back(ojson{{"name", r.name},
                                    {"social_welfare", sw},
                                    {"rounded_social_welfare", swr},
                                    {"normalized_max_envy", number_or_string(envy)},
                                    {"nash_objective", number_or_string(nash)}});
  }
  io.out << (io.tty && !json ? text.str() : dump(j));
  return kOk;
}

// ---------------------------------------------------------------------------
// Dispatch.

inline int run(const std::vector<std::string>& args, const Io& io) {
  CLI::App app{"DRF-MT fair allocation toolkit", "drfmt"};
  app.require_subcommand(1);
  bool json = false;
  app.add_flag("--json", json, "Force JSON output");

  auto* validate_cmd = app.add_subcommand("validate", "Check an instance file");
  std::string validate_file;
  validate_cmd->add_option("instance", validate_file, "Instance JSON or - for stdin")->required();

  SolveArgs solve;
  auto* solve_cmd = app.add_subcommand("solve", "Run a mechanism on an instance");
  solve_cmd->add_option("instance", solve.file)->required();
  solve_cmd->add_flag("--rounded", solve.rounded, "Round the allocation down to integer units");
  solve_cmd->add_flag("--trace", solve.trace, "Include per-round shadow prices and witnesses");
  solve_cmd->add_option("--variant", solve.variant)->check(CLI::IsMember({"drfmt", "alt", "mnw-pwl"}));
  solve_cmd->add_option("--grid-points", solve.grid_points, "Breakpoints for mnw-pwl");
  solve_cmd->add_option("-o,--output", solve.output);

  VerifyArgs verify;
  auto* verify_cmd = app.add_subcommand("verify", "Check fairness properties of an allocation");
  verify_cmd->add_option("instance", verify.file)->required();
  verify_cmd->add_option("allocation", verify.allocation, "Allocation JSON; defaults to a fresh solve");
  verify_cmd->add_option("--checks", verify.checks, "Comma list of ef,po,sp,si,prop,a1");
  verify_cmd->add_option("--variant", verify.variant)->check(CLI::IsMember({"drfmt", "alt"}));
  verify_cmd->add_option("--trials", verify.trials, "Misreports per agent for sp");
  verify_cmd->add_option("--seed", verify.seed);
  verify_cmd->add_option("--threads", verify.threads);
  verify_cmd->add_option("-o,--output", verify.output);

  FuzzArgs fuzz;
  auto* fuzz_cmd = app.add_subcommand("fuzz", "Search for profitable misreports");
  fuzz_cmd->add_option("instance", fuzz.file)->required();
  fuzz_cmd->add_option("--agent", fuzz.agent, "Agent index or name");
  fuzz_cmd->add_option("--trials", fuzz.trials);
  fuzz_cmd->add_option("--seed", fuzz.seed);
  fuzz_cmd->add_option("--variant", fuzz.variant)->check(CLI::IsMember({"drfmt", "alt"}));
  fuzz_cmd->add_option("--threads", fuzz.threads);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a random instance");
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--n", gen.n, "Number of agents");
  gen_cmd->add_option("--structure", gen.structure, "Meta-type sizes, comma separated");
  gen_cmd->add_flag("--contributions", gen.contributions, "Add contributions and contribution weights");
  gen_cmd->add_option("-o,--output", gen.output);

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Run a benchmark sweep");
  bench_cmd->add_option("config", bench.config)->required();
  bench_cmd->add_option("-o,--output", bench.output, "Trial CSV");
  bench_cmd->add_option("--summary-csv", bench.summary_csv);
  bench_cmd->add_option("--threads", bench.threads);

  auto* compare_cmd = app.add_subcommand("compare", "Welfare and envy of every mechanism on one instance");
  std::string compare_file;
  std::size_t compare_grid = 32;
  compare_cmd->add_option("instance", compare_file)->required();
  compare_cmd->add_option("--grid-points", compare_grid);

  for (auto* sub : app.get_subcommands({})) sub->add_flag("--json", json, "Force JSON output");

  try {
    std::vector<const char*> argv{"drfmt"};
    for (const auto& s : args) argv.push_back(s.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    io.out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    io.out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    io.err << "error: " << e.what() << '\n';
    return kInputError;
  }

  try {
    if (*validate_cmd) return cmd_validate(io, validate_file, json);
    if (*solve_cmd) return cmd_solve(io, solve, json);
    if (*verify_cmd) return cmd_verify(io, verify, json);
    if (*fuzz_cmd) return cmd_fuzz(io, fuzz, json);
    if (*gen_cmd) return cmd_gen(io, gen);
    if (*bench_cmd) return cmd_bench(io, bench);
    if (*compare_cmd) return cmd_compare(io, compare_file, compare_grid, json);
  } catch (const ParseError& e) {
    io.err << "parse error: " << e.what() << '\n';
    return kInputError;
  } catch (const ValidationError& e) {
    io.err << "invalid input: " << e.what() << '\n';
    return kInputError;
  } catch (const nlohmann::json::exception& e) {
    io.err << "parse error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::invalid_argument& e) {
    io.err << "invalid input: " << e.what() << '\n';
    return kInputError;
  } catch (const InvariantBreach& e) {
    io.err << "invariant breach: " << e.what() << '\n';
    return kInvariant;
  } catch (const std::logic_error& e) {
    io.err << "internal error: " << e.what() << '\n';
    return kInvariant;
  } catch (const std::exception& e) {
    io.err << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  }
  return kInputError;
}

}  // namespace drfmt::cli
