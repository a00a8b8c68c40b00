#include "secscale/config.hpp"

#include <fstream>
#include <map>
#include <set>

namespace secscale {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string join(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

std::uint64_t as_u64(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  throw ConfigError(path, "expected a non-negative integer");
}

unsigned as_unsigned(const json& v, const std::string& path) {
  const std::uint64_t x = as_u64(v, path);
  if (x > 0xffffffffu) throw ConfigError(path, "value too large");
  return static_cast<unsigned>(x);
}

double as_double(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  return v.get<double>();
}

bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw ConfigError(path, "expected true or false");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path, "expected a string");
  return v.get<std::string>();
}

std::vector<unsigned> as_unsigned_list(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) throw ConfigError(path, "expected a non-empty array");
  std::vector<unsigned> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_unsigned(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

// Walks one JSON object, rejecting keys nobody asked for.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError(path_, "expected an object");
  }
  ~Fields() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(join(path_, k), "unknown key");
  }

  const json* get(std::string_view key) {
    seen_.emplace(key);
    auto it = j_.find(std::string(key));
    return it == j_.end() ? nullptr : &*it;
  }
  std::string path(std::string_view key) const { return join(path_, key); }

  void u64(std::string_view key, std::uint64_t& out) {
    if (auto v = get(key)) out = as_u64(*v, path(key));
  }
  void size(std::string_view key, std::uint64_t& out) {
    if (auto v = get(key)) out = parse_size(*v, path(key));
  }
  void uint(std::string_view key, unsigned& out) {
    if (auto v = get(key)) out = as_unsigned(*v, path(key));
  }
  void count(std::string_view key, std::size_t& out) {
    if (auto v = get(key)) out = static_cast<std::size_t>(as_u64(*v, path(key)));
  }
  void real(std::string_view key, double& out) {
    if (auto v = get(key)) out = as_double(*v, path(key));
  }
  void flag(std::string_view key, bool& out) {
    if (auto v = get(key)) out = as_bool(*v, path(key));
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string, std::less<>> seen_;
};

void parse_layout(const json& j, LayoutConfig& c, const std::string& path) {
  Fields f(j, path);
  f.size("total_size", c.total_size);
  f.size("epc_base", c.epc_base);
  f.size("epc_size", c.epc_size);
  f.u64("scratch_pages", c.scratch_pages);
}

void parse_latency(const json& j, LatencyConfig& c, const std::string& path) {
  Fields f(j, path);
  f.u64("dram_access_cycles", c.dram_access_cycles);
  f.u64("dram_burst_cycles", c.dram_burst_cycles);
  f.u64("ctr_crypt_cycles", c.ctr_crypt_cycles);
  f.u64("ecb_crypt_cycles", c.ecb_crypt_cycles);
  f.u64("mac_compute_cycles", c.mac_compute_cycles);
  f.u64("sgx_fault_penalty", c.sgx_fault_penalty);
  f.u64("enclave_enter_exit", c.enclave_enter_exit);
  f.u64("penglai_mmt_miss_penalty", c.penglai_mmt_miss_penalty);
  f.u64("instruction_cycles", c.instruction_cycles);
  f.real("mvc_bytes_per_cycle", c.mvc_bytes_per_cycle);
  f.real("aes_bytes_per_cycle", c.aes_bytes_per_cycle);
  f.real("core_clock_ghz", c.core_clock_ghz);
}

void parse_secscale(const json& j, SecScaleConfig& c, const std::string& path) {
  Fields f(j, path);
  f.u64("epc_data_pages", c.epc_data_pages);
  f.count("eshr_entries", c.eshr_entries);
  f.flag("clubbing", c.clubbing);
  if (auto v = f.get("key_source")) {
    const std::string s = as_string(*v, f.path("key_source"));
    if (s == "prng")
      c.key_source = KeySource::Prng;
    else if (s == "global-counter")
      c.key_source = KeySource::GlobalCounter;
    else
      throw ConfigError(f.path("key_source"), "expected `prng` or `global-counter`");
  }
  if (auto v = f.get("forest")) {
    Fields g(*v, f.path("forest"));
    g.uint("levels", c.forest.levels);
    if (auto a = g.get("arities")) c.forest.arities = as_unsigned_list(*a, g.path("arities"));
    g.uint("top_cache_entries", c.forest.top_cache_entries);
  }
  if (auto v = f.get("merkle")) {
    Fields g(*v, f.path("merkle"));
    if (auto a = g.get("arities")) c.merkle.arities = as_unsigned_list(*a, g.path("arities"));
    g.size("counter_cache_bytes", c.merkle.counter_cache_bytes);
  }
  if (auto v = f.get("mvc")) {
    Fields g(*v, f.path("mvc"));
    g.flag("deferred", c.mvc.deferred);
    g.flag("grouping", c.mvc.grouping);
    g.count("max_outstanding", c.mvc.max_outstanding);
  }
}

// Sections shared by the top level and each `models` entry.
bool parse_sim_key(Fields& f, std::string_view key, SimConfig& c) {
  const json* v = f.get(key);
  if (!v) return false;
  const std::string p = f.path(key);
  if (key == "model") {
    const std::string name = as_string(*v, p);
    try {
      c.model = parse_model(name);
    } catch (const ConfigError&) {
      throw ConfigError(p, "unknown model `" + name + "`");
    }
  } else if (key == "seed") {
    c.seed = as_u64(*v, p);
  } else if (key == "integrity_tree_costs") {
    c.integrity_tree_costs = as_bool(*v, p);
  } else if (key == "layout") {
    parse_layout(*v, c.layout, p);
  } else if (key == "latency") {
    parse_latency(*v, c.latency, p);
  } else if (key == "secscale") {
    parse_secscale(*v, c.secscale, p);
  } else if (key == "dfp") {
    Fields g(*v, p);
    g.real("accuracy", c.dfp.accuracy);
    g.count("lookahead", c.dfp.lookahead);
  } else if (key == "penglai") {
    Fields g(*v, p);
    g.uint("root_cache_entries", c.penglai.root_cache_entries);
    g.u64("subtree_pages", c.penglai.subtree_pages);
    g.uint("walk_levels", c.penglai.walk_levels);
  } else if (key == "cache") {
    Fields g(*v, p);
    g.size("l1_bytes", c.cache.l1_bytes);
    g.uint("l1_ways", c.cache.l1_ways);
    g.size("l2_bytes", c.cache.l2_bytes);
    g.uint("l2_ways", c.cache.l2_ways);
  }
  return true;
}

constexpr std::array<std::string_view, 9> kSimKeys{"model",   "seed", "integrity_tree_costs", "layout", "latency",
                                                   "secscale", "dfp", "penglai",              "cache"};

void parse_sim(Fields& f, SimConfig& c) {
  for (auto k : kSimKeys) parse_sim_key(f, k, c);
}

void parse_workload(const json& j, WorkloadConfig& w, const std::string& path) {
  Fields f(j, path);
  if (auto v = f.get("trace")) w.trace = as_string(*v, f.path("trace"));
  SyntheticSpec& s = w.synthetic;
  if (auto v = f.get("pattern")) {
    const std::string name = as_string(*v, f.path("pattern"));
    try {
      s.pattern = parse_pattern(name);
    } catch (const ConfigError&) {
      throw ConfigError(f.path("pattern"), "unknown pattern `" + name + "`");
    }
  }
  f.real("zipf_s", s.zipf_s);
  f.size("stride", s.stride);
  f.size("footprint", s.footprint);
  f.real("read_fraction", s.read_fraction);
  f.u64("accesses", s.accesses);
  f.real("accesses_per_instruction", s.accesses_per_instruction);
  f.u64("seed", s.seed);
  if (auto v = f.get("enclave")) s.enclave = as_unsigned(*v, f.path("enclave"));
  f.u64("syscall_every", s.syscall_every);
}

ScriptedAttack parse_attack(const json& j, const std::string& path) {
  Fields f(j, path);
  ScriptedAttack s;
  const json* kind = f.get("kind");
  if (!kind) throw ConfigError(f.path("kind"), "missing");
  try {
    s.attack.kind = parse_attack_kind(as_string(*kind, f.path("kind")));
  } catch (const ConfigError& e) {
    throw ConfigError(f.path("kind"), e.what());
  }
  const json* tick = f.get("tick");
  if (!tick) throw ConfigError(f.path("tick"), "missing");
  s.tick = static_cast<std::size_t>(as_u64(*tick, f.path("tick")));
  if (auto v = f.get("capture_tick")) s.capture_tick = static_cast<std::size_t>(as_u64(*v, f.path("capture_tick")));
  if (auto v = f.get("enclave")) s.attack.enclave = as_unsigned(*v, f.path("enclave"));
  f.u64("vpage", s.attack.vpage);
  f.u64("peer_vpage", s.attack.peer_vpage);
  if (auto v = f.get("attacker")) s.attack.attacker = as_unsigned(*v, f.path("attacker"));
  f.uint("block", s.attack.block);
  f.uint("bit", s.attack.bit);
  if (is_replay(s.attack.kind)) {
    if (!s.capture_tick) throw ConfigError(f.path("capture_tick"), "replay attacks need a capture tick");
    if (*s.capture_tick >= s.tick) throw ConfigError(f.path("capture_tick"), "must precede tick");
  }
  return s;
}

void validate_sim(const SimConfig& c, const std::string& prefix) {
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(join(prefix, e.key_path()), e.message());
  } catch (const DomainError& e) {
    throw ConfigError(join(prefix, "secscale.forest"), e.what());
  }
}

ordered_json sim_json(const SimConfig& c) {
  ordered_json j;
  j["model"] = std::string(to_string(c.model));
  j["seed"] = c.seed;
  j["integrity_tree_costs"] = c.integrity_tree_costs;
  j["layout"] = {{"total_size", c.layout.total_size},
                 {"epc_base", c.layout.epc_base},
                 {"epc_size", c.layout.epc_size},
                 {"scratch_pages", c.layout.scratch_pages}};
  const LatencyConfig& l = c.latency;
  j["latency"] = {{"dram_access_cycles", l.dram_access_cycles},
                  {"dram_burst_cycles", l.dram_burst_cycles},
                  {"ctr_crypt_cycles", l.ctr_crypt_cycles},
                  {"ecb_crypt_cycles", l.ecb_crypt_cycles},
                  {"mac_compute_cycles", l.mac_compute_cycles},
                  {"sgx_fault_penalty", l.sgx_fault_penalty},
                  {"enclave_enter_exit", l.enclave_enter_exit},
                  {"penglai_mmt_miss_penalty", l.penglai_mmt_miss_penalty},
                  {"instruction_cycles", l.instruction_cycles},
                  {"mvc_bytes_per_cycle", l.mvc_bytes_per_cycle},
                  {"aes_bytes_per_cycle", l.aes_bytes_per_cycle},
                  {"core_clock_ghz", l.core_clock_ghz}};
  const SecScaleConfig& s = c.secscale;
  j["secscale"] = {
      {"epc_data_pages", s.epc_data_pages},
      {"eshr_entries", s.eshr_entries},
      {"clubbing", s.clubbing},
      {"key_source", s.key_source == KeySource::Prng ? "prng" : "global-counter"},
      {"forest", {{"levels", s.forest.levels}, {"arities", s.forest.arities}, {"top_cache_entries", s.forest.top_cache_entries}}},
      {"merkle", {{"arities", s.merkle.arities}, {"counter_cache_bytes", s.merkle.counter_cache_bytes}}},
      {"mvc", {{"deferred", s.mvc.deferred}, {"grouping", s.mvc.grouping}, {"max_outstanding", s.mvc.max_outstanding}}}};
  j["dfp"] = {{"accuracy", c.dfp.accuracy}, {"lookahead", c.dfp.lookahead}};
  j["penglai"] = {{"root_cache_entries", c.penglai.root_cache_entries},
                  {"subtree_pages", c.penglai.subtree_pages},
                  {"walk_levels", c.penglai.walk_levels}};
  j["cache"] = {{"l1_bytes", c.cache.l1_bytes},
                {"l1_ways", c.cache.l1_ways},
                {"l2_bytes", c.cache.l2_bytes},
                {"l2_ways", c.cache.l2_ways}};
  return j;
}

// Trend workload: uniform random over 32 MiB against a 1 MiB EPC.
constexpr const char* kTrendWorkload = R"({
  "pattern": "uniform", "footprint": "32MiB", "accesses": 3000,
  "accesses_per_instruction": 0.0001, "read_fraction": 0.7, "seed": 1
})";

const std::map<std::string, json, std::less<>>& presets() {
  static const std::map<std::string, json, std::less<>> table = [] {
    std::map<std::string, json, std::less<>> m;
    const json trend = json::parse(kTrendWorkload);
    const json cache = {{"l2_bytes", "256KiB"}};
    m["five-model"] = {{"cache", cache},
                       {"workload", trend},
                       {"models",
                        {{{"model", "baseline"}},
                         {{"model", "sgx-client"}},
                         {{"model", "dfp"}},
                         {{"model", "penglai-mmt"}},
                         {{"model", "secscale"}}}}};
    json sweep = json::array();
    for (int k : {5, 10, 20, 30, 40})
      sweep.push_back({{"label", "sgx-" + std::to_string(k) + "k"},
                       {"model", "sgx-client"},
                       {"latency", {{"sgx_fault_penalty", k * 1000}}}});
    m["fault-penalty-sweep"] = {{"cache", cache}, {"workload", trend}, {"models", sweep}};
    m["merkle-only"] = {{"cache", cache},
                        {"workload", trend},
                        {"latency", {{"sgx_fault_penalty", 0}}},
                        {"models", {{{"model", "sgx-client"}}, {{"model", "dfp"}}, {{"model", "penglai-mmt"}}}}};
    m["fault-only"] = {{"cache", cache},
                       {"workload", trend},
                       {"integrity_tree_costs", false},
                       {"models", {{{"model", "sgx-client"}}, {{"model", "dfp"}}}}};
    json zipf = json::parse(kTrendWorkload);
    zipf["pattern"] = "zipf";
    zipf["zipf_s"] = 1.0;
    m["optimization-ablation"] = {
        {"cache", cache},
        {"workload", zipf},
        {"model", "secscale"},
        {"models",
         {{{"label", "full"}},
          {{"label", "no-clubbing"}, {"secscale", {{"clubbing", false}}}},
          {{"label", "no-top-cache"}, {"secscale", {{"forest", {{"top_cache_entries", 0}}}}}},
          {{"label", "neither"}, {"secscale", {{"clubbing", false}, {"forest", {{"top_cache_entries", 0}}}}}},
          {{"label", "blocking-mvc"}, {"secscale", {{"mvc", {{"deferred", false}}}}}}}}};
    return m;
  }();
  return table;
}

}  // namespace

std::uint64_t parse_size(const json& v, const std::string& key_path) {
  if (v.is_number()) return as_u64(v, key_path);
  if (!v.is_string()) throw ConfigError(key_path, "expected a size such as 4096 or \"64MiB\"");
  const std::string s = v.get<std::string>();
  std::size_t pos = 0;
  std::uint64_t n = 0;
  try {
    n = std::stoull(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError(key_path, "bad size `" + s + "`");
  }
  const std::string unit = s.substr(pos);
  static const std::map<std::string, unsigned, std::less<>> shifts{{"", 0}, {"B", 0}, {"KiB", 10}, {"MiB", 20}, {"GiB", 30}};
  auto it = shifts.find(unit);
  if (it == shifts.end()) throw ConfigError(key_path, "bad size unit `" + unit + "` (use B, KiB, MiB or GiB)");
  if (it->second && n > (~std::uint64_t{0} >> it->second)) throw ConfigError(key_path, "size overflows");
  return n << it->second;
}

RunConfig parse_run_config(const json& j, const RunConfig& base) {
  RunConfig c = base;
  {
    Fields f(j, "");
    parse_sim(f, c.sim);
    if (auto v = f.get("workload")) parse_workload(*v, c.workload, "workload");
    if (auto v = f.get("out")) c.out = as_string(*v, "out");
    if (auto v = f.get("attacks")) {
      if (!v->is_array()) throw ConfigError("attacks", "expected an array");
      c.attacks.clear();
      for (std::size_t i = 0; i < v->size(); ++i) c.attacks.push_back(parse_attack((*v)[i], "attacks[" + std::to_string(i) + "]"));
    }
    if (auto v = f.get("models")) {
      if (!v->is_array()) throw ConfigError("models", "expected an array");
      c.model_specs = *v;
    }
  }
  c.models.clear();
  for (std::size_t i = 0; i < c.model_specs.size(); ++i) {
    const std::string p = "models[" + std::to_string(i) + "]";
    Fields g(c.model_specs[i], p);
    ModelEntry e{"", c.sim};
    parse_sim(g, e.sim);
    if (auto l = g.get("label")) e.label = as_string(*l, g.path("label"));
    if (e.label.empty()) e.label = std::string(to_string(e.sim.model));
    c.models.push_back(std::move(e));
  }
  validate_sim(c.sim, "");
  for (std::size_t i = 0; i < c.models.size(); ++i) validate_sim(c.models[i].sim, "models[" + std::to_string(i) + "]");
  if (c.workload.trace.empty()) {
    c.workload.synthetic.validate();
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("", path.string() + ": " + e.what());
  }
  return parse_run_config(j, base);
}

ordered_json to_json(const RunConfig& c) {
  ordered_json j = sim_json(c.sim);
  const SyntheticSpec& s = c.workload.synthetic;
  ordered_json w;
  if (!c.workload.trace.empty()) w["trace"] = c.workload.trace.string();
  w["pattern"] = std::string(to_string(s.pattern));
  w["zipf_s"] = s.zipf_s;
  w["stride"] = s.stride;
  w["footprint"] = s.footprint;
  w["read_fraction"] = s.read_fraction;
  w["accesses"] = s.accesses;
  w["accesses_per_instruction"] = s.accesses_per_instruction;
  w["seed"] = s.seed;
  w["enclave"] = s.enclave;
  w["syscall_every"] = s.syscall_every;
  j["workload"] = w;
  if (!c.models.empty()) {
    ordered_json models = ordered_json::array();
    for (const auto& m : c.models) {
      ordered_json e = sim_json(m.sim);
      e["label"] = m.label;
      models.push_back(e);
    }
    j["models"] = models;
  }
  if (!c.attacks.empty()) {
    ordered_json attacks = ordered_json::array();
    for (const auto& s2 : c.attacks) {
      ordered_json a{{"tick", s2.tick}, {"kind", std::string(to_string(s2.attack.kind))}};
      if (s2.capture_tick) a["capture_tick"] = *s2.capture_tick;
      a["enclave"] = s2.attack.enclave;
      a["vpage"] = s2.attack.vpage;
      a["peer_vpage"] = s2.attack.peer_vpage;
      a["attacker"] = s2.attack.attacker;
      a["block"] = s2.attack.block;
      a["bit"] = s2.attack.bit;
      attacks.push_back(a);
    }
    j["attacks"] = attacks;
  }
  j["out"] = c.out.string();
  return j;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& [k, v] : presets()) out.push_back(k);
  return out;
}

const json& preset(std::string_view name) {
  auto it = presets().find(name);
  if (it == presets().end()) throw ConfigError("preset", "unknown preset `" + std::string(name) + "`");
  return it->second;
}

std::vector<TraceRecord> load_workload(const WorkloadConfig& w) {
  return w.trace.empty() ? generate(w.synthetic) : read_trace_file(w.trace);
}

}  // namespace secscale
