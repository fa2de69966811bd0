#pragma once

// Strict JSON reading/writing for instances and allocation files.
//
// Instance schema:
//   {"meta_types":[{"name":str,"resources":[{"id":str,"supply":int}]}],
//    "agents":[{"name":str,"weights":{meta:num},"demands":{meta:num},
//               "groups":{meta:[resource_id]},"contributions":{resource_id:num}?}]}
//
// Allocation files map agent -> resource -> units, either bare or under an
// "allocation" key (so a `solve` result can be fed back into `verify`).

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "drfmt/error.hpp"
#include "drfmt/model.hpp"

namespace drfmt {

using ojson = nlohmann::ordered_json;

namespace detail {

inline void require_object(const ojson& j, const std::string& where,
                           std::initializer_list<const char*> required,
                           std::initializer_list<const char*> optional = {}) {
  if (!j.is_object()) throw ParseError(where + ": expected an object");
  std::set<std::string> known;
  for (const char* k : required) {
    known.insert(k);
    if (!j.contains(k)) throw ParseError(where + ": missing field \"" + k + "\"");
  }
  for (const char* k : optional) known.insert(k);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ParseError(where + ": unknown field \"" + it.key() + "\"");
  }
}

inline std::string get_string(const ojson& j, const std::string& where) {
  if (!j.is_string()) throw ParseError(where + ": expected a string");
  return j.get<std::string>();
}

inline double get_nonnegative(const ojson& j, const std::string& where) {
  if (!j.is_number()) throw ParseError(where + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v) || v < 0.0) throw ParseError(where + ": must be non-negative");
  return v;
}

inline std::map<std::string, double> get_number_map(const ojson& j, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": expected an object");
  std::map<std::string, double> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    out[it.key()] = get_nonnegative(it.value(), where + "." + it.key());
  }
  return out;
}

inline ojson parse_text(const std::string& text) {
  try {
    return ojson::parse(text);
  } catch (const ojson::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace detail

inline RawInstance instance_from_json(const ojson& j) {
  using namespace detail;
  require_object(j, "instance", {"meta_types", "agents"});
  if (!j["meta_types"].is_array()) throw ParseError("meta_types: expected an array");
  if (!j["agents"].is_array()) throw ParseError("agents: expected an array");

  RawInstance raw;
  for (std::size_t l = 0; l < j["meta_types"].size(); ++l) {
    const auto& m = j["meta_types"][l];
    const std::string where = "meta_types[" + std::to_string(l) + "]";
    require_object(m, where, {"name", "resources"});
    MetaTypeSpec mt;
    mt.name = get_string(m["name"], where + ".name");
    if (!m["resources"].is_array()) throw ParseError(where + ".resources: expected an array");
    for (std::size_t k = 0; k < m["resources"].size(); ++k) {
      const auto& r = m["resources"][k];
      const std::string rw = where + ".resources[" + std::to_string(k) + "]";
      require_object(r, rw, {"id", "supply"});
      ResourceSpec spec;
      spec.id = get_string(r["id"], rw + ".id");
      const auto& s = r["supply"];
      if (!s.is_number_integer()) throw ParseError(rw + ".supply: expected an integer");
      if (s.is_number_unsigned()) {
        spec.supply = static_cast<std::int64_t>(s.get<std::uint64_t>());
      } else {
        spec.supply = s.get<std::int64_t>();
        if (spec.supply < 0) throw ParseError(rw + ".supply: must be non-negative");
      }
      mt.resources.push_back(std::move(spec));
    }
    raw.meta_types.push_back(std::move(mt));
  }

  for (std::size_t i = 0; i < j["agents"].size(); ++i) {
    const auto& a = j["agents"][i];
    const std::string where = "agents[" + std::to_string(i) + "]";
    require_object(a, where, {"name", "weights", "demands", "groups"}, {"contributions"});
    AgentSpec spec;
    spec.name = get_string(a["name"], where + ".name");
    spec.weights = get_number_map(a["weights"], where + ".weights");
    spec.demands = get_number_map(a["demands"], where + ".demands");
    if (!a["groups"].is_object()) throw ParseError(where + ".groups: expected an object");
    for (auto it = a["groups"].begin(); it != a["groups"].end(); ++it) {
      const std::string gw = where + ".groups." + it.key();
      if (!it.value().is_array()) throw ParseError(gw + ": expected an array");
      auto& group = spec.groups[it.key()];
      for (const auto& r : it.value()) group.push_back(get_string(r, gw));
    }
    if (a.contains("contributions")) {
      spec.contributions = get_number_map(a["contributions"], where + ".contributions");
    }
    raw.agents.push_back(std::move(spec));
  }
  return raw;
}

inline RawInstance parse_instance(const std::string& text) {
  return instance_from_json(detail::parse_text(text));
}

inline ojson instance_to_json(const RawInstance& raw) {
  ojson j;
  j["meta_types"] = ojson::array();
  for (const auto& mt : raw.meta_types) {
    ojson m;
    m["name"] = mt.name;
    m["resources"] = ojson::array();
    for (const auto& r : mt.resources) m["resources"].push_back(ojson{{"id", r.id}, {"supply", r.supply}});
    j["meta_types"].push_back(std::move(m));
  }
  j["agents"] = ojson::array();
  for (const auto& a : raw.agents) {
    ojson o;
    o["name"] = a.name;
    o["weights"] = ojson::object();
    for (const auto& [k, v] : a.weights) o["weights"][k] = v;
    o["demands"] = ojson::object();
    for (const auto& [k, v] : a.demands) o["demands"][k] = v;
    o["groups"] = ojson::object();
    for (const auto& [k, v] : a.groups) o["groups"][k] = v;
    if (a.contributions) {
      o["contributions"] = ojson::object();
      for (const auto& [k, v] : *a.contributions) o["contributions"][k] = v;
    }
    j["agents"].push_back(std::move(o));
  }
  return j;
}

inline std::string serialize_instance(const RawInstance& raw, int indent = 2) {
  return instance_to_json(raw).dump(indent);
}

// Reads a whole file, or stdin when path is "-".
inline std::string read_text(const std::string& path) {
  if (path == "-") {
    return std::string(std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline RawInstance load_instance(const std::string& path) { return parse_instance(read_text(path)); }

// ---------------------------------------------------------------------------
// Allocations in raw units.

inline ojson allocation_to_json(const NormalizedInstance& inst, const Allocation& alloc) {
  ojson j = ojson::object();
  for (std::size_t i = 0; i < inst.num_agents(); ++i) {
    ojson row = ojson::object();
    for (std::size_t r = 0; r < inst.num_resources(); ++r) {
      if (alloc.units) {
        if ((*alloc.units)[i][r] != 0) row[inst.resource_ids[r]] = (*alloc.units)[i][r];
      } else {
        const double u = alloc.x(i, r) * inst.meta_unit_totals[inst.meta_of[r]];
        if (u != 0.0) row[inst.resource_ids[r]] = u;
      }
    }
    j[inst.agent_names[i]] = std::move(row);
  }
  return j;
}

inline Allocation allocation_from_json(const NormalizedInstance& inst, const ojson& doc) {
  const ojson& j = doc.is_object() && doc.contains("allocation") ? doc["allocation"] : doc;
  if (!j.is_object()) throw ParseError("allocation: expected an object");
  auto alloc = Allocation::zeros(inst);
  std::vector<std::vector<std::int64_t>> units(inst.num_agents(),
                                               std::vector<std::int64_t>(inst.num_resources(), 0));
  bool integral = true;
  for (auto it = j.begin(); it != j.end(); ++it) {
    std::size_t i;
    try {
      i = agent_index(inst, it.key());
    } catch (const ValidationError& e) {
      throw ParseError(std::string("allocation: ") + e.what());
    }
    if (!it.value().is_object()) throw ParseError("allocation." + it.key() + ": expected an object");
    for (auto rt = it.value().begin(); rt != it.value().end(); ++rt) {
      std::size_t r;
      try {
        r = resource_index(inst, rt.key());
      } catch (const ValidationError& e) {
        throw ParseError(std::string("allocation: ") + e.what());
      }
      const double v = detail::get_nonnegative(rt.value(), "allocation." + it.key() + "." + rt.key());
      alloc.x(i, r) = v / inst.meta_unit_totals[inst.meta_of[r]];
      if (rt.value().is_number_integer()) {
        units[i][r] = rt.value().get<std::int64_t>();
      } else {
        integral = false;
      }
    }
  }
  if (integral) alloc.units = units;
  return alloc;
}

inline Allocation parse_allocation(const NormalizedInstance& inst, const std::string& text) {
  return allocation_from_json(inst, detail::parse_text(text));
}

}  // namespace drfmt
