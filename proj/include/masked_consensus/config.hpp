#ifndef MASKED_CONSENSUS_CONFIG_HPP
#define MASKED_CONSENSUS_CONFIG_HPP

// Scenario files are TOML. This header turns a parsed document (plus command
// line overrides) into a validated DacScenario or FleetScenario. Every schema
// error names the offending key and, when it exists in the file, its line and
// column.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>
#include <tomlplusplus/toml.hpp>

#include "masked_consensus/benchmark.hpp"
#include "masked_consensus/bess.hpp"
#include "masked_consensus/errors.hpp"
#include "masked_consensus/experiments.hpp"

namespace mc::config {

struct AdversarySettings {
  bool enabled = true;
  std::optional<double> cutoff;  // seconds; default max(1, 10 / (beta lambda2))
  std::size_t decimation = 1;
};

struct OutputSettings {
  std::string dir = "out";
  std::size_t decimate = 1;
};

struct Settings {
  std::variant<DacScenario, FleetScenario> scenario;
  AdversarySettings adversary;
  OutputSettings output;
  std::uint64_t seed = 0;
  nlohmann::json effective;  // merged config, echoed into the manifest

  bool is_fleet() const { return std::holds_alternative<FleetScenario>(scenario); }
  const DacScenario& dac() const { return std::get<DacScenario>(scenario); }
  const FleetScenario& fleet() const { return std::get<FleetScenario>(scenario); }
  const Topology& topology() const {
    return is_fleet() ? fleet().topo : dac().topo;
  }
  double beta() const { return is_fleet() ? fleet().dac.beta : dac().params.beta; }
  const MaskBook* mask() const { return is_fleet() ? fleet().mask() : dac().mask(); }
};

namespace detail {

inline std::string position(const toml::node* n) {
  if (n == nullptr || !n->source().begin) return {};
  std::ostringstream os;
  os << " (line " << n->source().begin.line << ", column " << n->source().begin.column << ")";
  return os.str();
}

[[noreturn]] inline void fail(std::string_view path, std::string_view what, const toml::node* n = nullptr) {
  throw ConfigError(std::string(path) + ": " + std::string(what) + position(n));
}

inline std::string join(std::string_view path, std::string_view key) {
  return path.empty() ? std::string(key) : std::string(path) + "." + std::string(key);
}

inline void allow_keys(const toml::table& t, std::string_view path, std::initializer_list<std::string_view> keys) {
  const std::set<std::string_view> allowed(keys);
  for (const auto& [k, v] : t) {
    if (!allowed.contains(k.str())) fail(join(path, k.str()), "unknown key", &v);
  }
}

inline const toml::table* table_at(const toml::table& t, std::string_view key, std::string_view path) {
  const toml::node* n = t.get(key);
  if (n == nullptr) return nullptr;
  if (!n->is_table()) fail(join(path, key), "expected a table", n);
  return n->as_table();
}

inline double number(const toml::node& n, std::string_view path) {
  if (auto v = n.value<double>(); v && (n.is_floating_point() || n.is_integer())) return *v;
  fail(path, "expected a number", &n);
}

inline std::optional<double> number_at(const toml::table& t, std::string_view key, std::string_view path) {
  const toml::node* n = t.get(key);
  if (n == nullptr) return std::nullopt;
  return number(*n, join(path, key));
}

inline double number_or(const toml::table& t, std::string_view key, std::string_view path, double fallback) {
  return number_at(t, key, path).value_or(fallback);
}

inline std::int64_t integer(const toml::node& n, std::string_view path) {
  if (!n.is_integer()) fail(path, "expected an integer", &n);
  return *n.value<std::int64_t>();
}

inline std::size_t count_or(const toml::table& t, std::string_view key, std::string_view path,
                            std::size_t fallback) {
  const toml::node* n = t.get(key);
  if (n == nullptr) return fallback;
  const auto v = integer(*n, join(path, key));
  if (v < 1) fail(join(path, key), "must be >= 1", n);
  return static_cast<std::size_t>(v);
}

inline std::optional<std::string> string_at(const toml::table& t, std::string_view key, std::string_view path) {
  const toml::node* n = t.get(key);
  if (n == nullptr) return std::nullopt;
  if (!n->is_string()) fail(join(path, key), "expected a string", n);
  return std::string(*n->value<std::string_view>());
}

inline const toml::array& array(const toml::node& n, std::string_view path) {
  if (!n.is_array()) fail(path, "expected an array", &n);
  return *n.as_array();
}

inline std::vector<double> numbers(const toml::node& n, std::string_view path) {
  std::vector<double> out;
  const auto& a = array(n, path);
  for (std::size_t k = 0; k < a.size(); ++k) out.push_back(number(*a.get(k), std::string(path) + "[" + std::to_string(k) + "]"));
  return out;
}

inline const toml::node& required(const toml::table& t, std::string_view key, std::string_view path) {
  const toml::node* n = t.get(key);
  if (n == nullptr) fail(join(path, key), "missing required key", &t);
  return *n;
}

inline Topology read_topology(const toml::table& root) {
  const toml::table* t = table_at(root, "topology", "");
  if (t == nullptr) fail("topology", "missing required table");
  allow_keys(*t, "topology", {"kind", "n", "weight", "edges"});
  const auto kind = string_at(*t, "kind", "topology").value_or("ring");
  const toml::node& n_node = required(*t, "n", "topology");
  const auto n = integer(n_node, "topology.n");
  if (n < 1 || n > 10000) fail("topology.n", "must lie in [1, 10000]", &n_node);
  try {
    if (kind == "ring") {
      if (t->contains("edges")) fail("topology.edges", "not allowed with kind = \"ring\"", t->get("edges"));
      const double w = number_or(*t, "weight", "topology", 1.0);
      return Topology::ring(static_cast<std::size_t>(n), w);
    }
    if (kind == "edges") {
      if (t->contains("weight")) fail("topology.weight", "only used with kind = \"ring\"", t->get("weight"));
      const auto& rows = array(required(*t, "edges", "topology"), "topology.edges");
      std::vector<Edge> edges;
      for (std::size_t k = 0; k < rows.size(); ++k) {
        const std::string path = "topology.edges[" + std::to_string(k) + "]";
        const auto e = numbers(*rows.get(k), path);
        if (e.size() != 2 && e.size() != 3) fail(path, "expected [i, j] or [i, j, weight]", rows.get(k));
        if (e[0] != std::floor(e[0]) || e[1] != std::floor(e[1])) fail(path, "agent ids must be integers", rows.get(k));
        edges.push_back({static_cast<int>(e[0]), static_cast<int>(e[1]), e.size() == 3 ? e[2] : 1.0});
      }
      return Topology::build(static_cast<std::size_t>(n), edges);
    }
  } catch (const std::invalid_argument& e) {
    fail("topology", e.what(), t);
  }
  fail("topology.kind", "expected \"ring\" or \"edges\"", t->get("kind"));
}

inline ReferenceSpec read_reference(const toml::node& node, std::string_view path) {
  if (!node.is_table()) fail(path, "expected a table {offset, slope, terms}", &node);
  const auto& t = *node.as_table();
  allow_keys(t, path, {"offset", "slope", "terms"});
  ReferenceSpec s;
  s.offset = number_or(t, "offset", path, 0.0);
  s.slope = number_or(t, "slope", path, 0.0);
  if (const toml::node* terms = t.get("terms")) {
    const auto& rows = array(*terms, join(path, "terms"));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const std::string p = join(path, "terms") + "[" + std::to_string(k) + "]";
      const auto v = numbers(*rows.get(k), p);
      if (v.size() != 2 && v.size() != 3) fail(p, "expected [amplitude, omega] or [amplitude, omega, phase]", rows.get(k));
      s.terms.push_back({v[0], v[1], v.size() == 3 ? v[2] : 0.0});
    }
  }
  return s;
}

inline ReferenceBank read_references(const toml::table& t, std::size_t n) {
  ReferenceBank bank(n);
  std::vector<bool> seen(n, false);
  for (const auto& [k, v] : t) {
    const std::string key(k.str());
    const std::string path = "references." + key;
    std::size_t idx = 0;
    if (key.rfind("agent_", 0) != 0) fail(path, "expected keys named agent_<i>", &v);
    try {
      std::size_t used = 0;
      idx = std::stoul(key.substr(6), &used);
      if (used != key.size() - 6) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      fail(path, "expected keys named agent_<i>", &v);
    }
    if (idx < 1 || idx > n) fail(path, "agent index out of range 1.." + std::to_string(n), &v);
    bank[idx - 1] = read_reference(v, path);
    seen[idx - 1] = true;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!seen[i]) fail("references", "missing agent_" + std::to_string(i + 1), &t);
  }
  return bank;
}

inline std::optional<MaskBook> read_masking(const toml::table& root, const Topology& topo, std::uint64_t seed) {
  const toml::table* t = table_at(root, "masking", "");
  if (t == nullptr) return std::nullopt;
  allow_keys(*t, "masking", {"amplitude", "freq_range", "seed", "explicit"});
  const toml::node& amp_node = required(*t, "amplitude", "masking");
  const double amp = number(amp_node, "masking.amplitude");
  if (!(amp >= 0.0)) fail("masking.amplitude", "must be >= 0", &amp_node);
  try {
    if (const toml::node* ex = t->get("explicit")) {
      if (t->contains("freq_range")) fail("masking.freq_range", "not used together with masking.explicit", t->get("freq_range"));
      const auto& rows = array(*ex, "masking.explicit");
      std::vector<DirectedFrequency> f;
      for (std::size_t k = 0; k < rows.size(); ++k) {
        const std::string p = "masking.explicit[" + std::to_string(k) + "]";
        const auto v = numbers(*rows.get(k), p);
        if (v.size() != 3) fail(p, "expected [i, j, omega]", rows.get(k));
        if (v[0] != std::floor(v[0]) || v[1] != std::floor(v[1])) fail(p, "agent ids must be integers", rows.get(k));
        f.push_back({static_cast<int>(v[0]), static_cast<int>(v[1]), v[2]});
      }
      return mask_book_from_explicit(topo, amp, f);
    }
    FrequencyRange range;
    if (const toml::node* r = t->get("freq_range")) {
      const auto v = numbers(*r, "masking.freq_range");
      if (v.size() != 2) fail("masking.freq_range", "expected [lo, hi]", r);
      range = {v[0], v[1]};
    }
    return generate_mask_book(topo, amp, range, seed);
  } catch (const std::invalid_argument& e) {
    fail("masking", e.what(), t);
  }
}

inline FleetConfig read_fleet(const toml::table& t, std::size_t n) {
  allow_keys(t, "bess", {"capacities_Ah", "voltage", "soc0", "mode", "kappa", "b", "a1_fraction"});
  auto sized = [&](std::string_view key) {
    const toml::node& node = required(t, key, "bess");
    auto v = numbers(node, join("bess", key));
    if (v.size() != n) fail(join("bess", key), "expected " + std::to_string(n) + " entries", &node);
    return v;
  };
  const auto cap = sized("capacities_Ah");
  const auto soc = sized("soc0");
  const auto b = sized("b");
  const toml::node& v_node = required(t, "voltage", "bess");
  const double voltage = number(v_node, "bess.voltage");

  FleetConfig cfg;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string p = "bess[unit " + std::to_string(i + 1) + "]";
    if (!(cap[i] > 0.0)) fail(p, "capacity must be > 0", t.get("capacities_Ah"));
    if (!(voltage > 0.0)) fail("bess.voltage", "must be > 0", &v_node);
    if (!(soc[i] >= 0.0 && soc[i] <= 1.0)) fail(p, "soc0 must lie in [0, 1]", t.get("soc0"));
    if (b[i] != 0.0 && b[i] != 1.0) fail(p, "b must be 0 or 1", t.get("b"));
    cfg.units.push_back(BatteryUnit::from_amp_hours(cap[i], voltage, soc[i]));
    cfg.access.push_back(b[i] == 1.0 ? 1 : 0);
  }
  const auto mode = string_at(t, "mode", "bess").value_or("discharge");
  if (mode == "discharge") {
    cfg.mode = Mode::Discharging;
  } else if (mode == "charge") {
    cfg.mode = Mode::Charging;
  } else {
    fail("bess.mode", "expected \"discharge\" or \"charge\"", t.get("mode"));
  }
  cfg.kappa = number_or(t, "kappa", "bess", 300.0);
  const double fraction = number_or(t, "a1_fraction", "bess", 0.05);
  if (!(fraction > 0.0 && fraction < 1.0)) fail("bess.a1_fraction", "must lie in (0, 1)", t.get("a1_fraction"));
  cfg.a1 = default_a1(cfg.units, fraction);
  try {
    cfg.validate(n);
  } catch (const std::invalid_argument& e) {
    fail("bess", e.what(), &t);
  }
  return cfg;
}

inline nlohmann::json to_json(const toml::node& n) {
  if (const auto* t = n.as_table()) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [k, v] : *t) out[std::string(k.str())] = to_json(v);
    return out;
  }
  if (const auto* a = n.as_array()) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& v : *a) out.push_back(to_json(v));
    return out;
  }
  if (n.is_integer()) return *n.value<std::int64_t>();
  if (n.is_floating_point()) return *n.value<double>();
  if (n.is_boolean()) return *n.value<bool>();
  if (n.is_string()) return std::string(*n.value<std::string_view>());
  std::ostringstream os;
  n.visit([&](const auto& v) { os << v; });
  return os.str();
}

}  // namespace detail

inline toml::table parse(std::string_view text, std::string_view source = "<config>") {
  try {
    return toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << source << ":" << e.source().begin.line << ":" << e.source().begin.column << ": " << e.description();
    throw ConfigError(os.str());
  }
}

inline toml::table parse_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open file");
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str(), path.string());
}

// `section.key=value`: the value is read as a TOML value (so strings may be
// quoted and arrays written inline); if that fails it is taken as a bare
// string. Intermediate tables are created as needed.
inline void apply_override(toml::table& root, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("--set " + std::string(assignment) + ": expected key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    parts.push_back(key.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  for (const auto& p : parts) {
    if (p.empty()) throw ConfigError("--set " + key + ": empty key segment");
  }

  toml::table value_doc;
  try {
    value_doc = toml::parse("v = " + raw);
  } catch (const toml::parse_error&) {
    value_doc.insert_or_assign("v", raw);
  }

  toml::table* t = &root;
  for (std::size_t k = 0; k + 1 < parts.size(); ++k) {
    toml::node* next = t->get(parts[k]);
    if (next == nullptr) {
      t->insert_or_assign(parts[k], toml::table{});
      next = t->get(parts[k]);
    }
    if (!next->is_table()) throw ConfigError("--set " + key + ": " + parts[k] + " is not a table");
    t = next->as_table();
  }
  t->insert_or_assign(parts.back(), *value_doc.get("v"));
}

inline nlohmann::json to_json(const toml::table& t) { return detail::to_json(t); }

// Validates the document and builds the scenario. `seed` (from the command
// line) replaces masking.seed.
inline Settings load(const toml::table& root, std::optional<std::uint64_t> seed = std::nullopt) {
  using namespace detail;
  allow_keys(root, "", {"topology", "references", "power", "bess", "masking", "dac", "adversary", "output"});
  std::uint64_t seed_value = 0;
  AdversarySettings adversary;
  OutputSettings output;

  const toml::table* masking = table_at(root, "masking", "");
  if (seed) {
    seed_value = *seed;
  } else if (masking != nullptr && masking->contains("seed")) {
    const toml::node* s = masking->get("seed");
    const auto v = integer(*s, "masking.seed");
    if (v < 0) fail("masking.seed", "must be >= 0", s);
    seed_value = static_cast<std::uint64_t>(v);
  }

  Topology topo = read_topology(root);
  const std::size_t n = topo.size();
  auto book = read_masking(root, topo, seed_value);

  DacParams params;
  IntegrationOptions opt;
  if (const toml::table* dac = table_at(root, "dac", "")) {
    allow_keys(*dac, "dac", {"beta", "dt", "horizon"});
    params.beta = number_or(*dac, "beta", "dac", params.beta);
    opt.dt = number_or(*dac, "dt", "dac", opt.dt);
    opt.horizon = number_or(*dac, "horizon", "dac", opt.horizon);
    if (!(params.beta > 0.0)) fail("dac.beta", "must be > 0", dac->get("beta"));
    if (!(opt.dt > 0.0)) fail("dac.dt", "must be > 0", dac->get("dt"));
    if (!(opt.horizon >= opt.dt)) fail("dac.horizon", "must be >= dac.dt", dac->get("horizon"));
  }

  if (const toml::table* adv = table_at(root, "adversary", "")) {
    allow_keys(*adv, "adversary", {"enabled", "cutoff", "decimation"});
    if (const toml::node* e = adv->get("enabled")) {
      if (!e->is_boolean()) fail("adversary.enabled", "expected true or false", e);
      adversary.enabled = *e->value<bool>();
    }
    adversary.cutoff = number_at(*adv, "cutoff", "adversary");
    if (adversary.cutoff && !(*adversary.cutoff >= 0.0)) {
      fail("adversary.cutoff", "must be >= 0", adv->get("cutoff"));
    }
    adversary.decimation = count_or(*adv, "decimation", "adversary", 1);
  }

  if (const toml::table* o = table_at(root, "output", "")) {
    allow_keys(*o, "output", {"dir", "decimate"});
    output.dir = string_at(*o, "dir", "output").value_or(output.dir);
    output.decimate = count_or(*o, "decimate", "output", 1);
  }

  const toml::table* refs = table_at(root, "references", "");
  const toml::table* bess = table_at(root, "bess", "");
  if ((refs == nullptr) == (bess == nullptr)) {
    fail("config", "exactly one of [references] and [bess] must be present");
  }
  if (refs != nullptr) {
    if (root.contains("power")) fail("power", "only used with [bess]", root.get("power"));
    Settings out{DacScenario{std::move(topo), params, read_references(*refs, n), std::move(book), opt},
                 adversary, output, seed_value, to_json(root)};
    if (masking != nullptr) out.effective["masking"]["seed"] = seed_value;
    return out;
  }
  const toml::table* power = table_at(root, "power", "");
  if (power == nullptr) fail("power", "[bess] requires a [power] table with a reference");
  allow_keys(*power, "power", {"reference"});
  const ReferenceSpec pref = read_reference(required(*power, "reference", "power"), "power.reference");
  FleetConfig fleet = read_fleet(*bess, n);
  Settings out{FleetScenario{std::move(topo), std::move(fleet), std::move(book), pref, params, opt}, adversary,
               output, seed_value, to_json(root)};
  if (masking != nullptr) out.effective["masking"]["seed"] = seed_value;
  return out;
}

}  // namespace mc::config

#endif
