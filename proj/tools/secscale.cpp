// secscale: run, compare, storage, attack and gen-trace front end.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "secscale/adversary.hpp"
#include "secscale/config.hpp"
#include "secscale/sim.hpp"

namespace fs = std::filesystem;
using namespace secscale;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitSecurity = 2;
constexpr int kExitSuiteFailed = 3;

struct Common {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> models;
  std::string trace;
  bool print_config = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--preset", c.preset, "built-in preset applied before --config");
  cmd->add_option("--seed", c.seed, "seed for keys, the synthetic workload and model randomness");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--model", c.models, "model(s); for compare a list replaces the config's models")->delimiter(',');
  cmd->add_option("--trace", c.trace, "trace file (.gz allowed) instead of the synthetic workload");
  cmd->add_flag("--print-config", c.print_config, "print the effective configuration and exit");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg;
  if (!c.preset.empty()) cfg = parse_run_config(preset(c.preset));
  if (!c.config.empty()) cfg = load_run_config(c.config, cfg);
  nlohmann::json flags = nlohmann::json::object();
  if (c.seed) {
    flags["seed"] = *c.seed;
    flags["workload"]["seed"] = *c.seed;
  }
  if (!c.out.empty()) flags["out"] = c.out;
  if (!c.trace.empty()) flags["workload"]["trace"] = c.trace;
  if (c.models.size() == 1) flags["model"] = c.models.front();
  if (c.models.size() > 1) {
    flags["models"] = nlohmann::json::array();
    for (const auto& m : c.models) flags["models"].push_back({{"model", m}});
  }
  return parse_run_config(flags, cfg);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

FilteredTrace load_filtered(const RunConfig& cfg) {
  const auto records = load_workload(cfg.workload);
  if (records.empty()) throw ConfigError("workload", "trace is empty");
  return llc_filter(records, cfg.sim.cache);
}

int cmd_run(const Common& c) {
  const RunConfig cfg = resolve(c);
  if (c.print_config) {
    std::cout << to_json(cfg).dump(2) << "\n";
    return kExitOk;
  }
  const FilteredTrace trace = load_filtered(cfg);
  Adversary adv;
  RunOptions opts;
  if (!cfg.attacks.empty()) opts.before_event = attack_hook(adv, cfg.attacks);
  const Report r = run(cfg.sim, trace, opts);
  ensure_dir(cfg.out);
  std::ostringstream json;
  write_report_json(json, r);
  write_file(cfg.out / "report.json", json.str());
  write_file(cfg.out / "summary.csv", report_csv_header() + "\n" + report_csv_row(r) + "\n");
  std::cout << r.model << ": " << r.total_cycles << " cycles, " << r.instructions << " instructions, performance "
            << std::setprecision(4) << r.performance << ", " << r.epc_faults << " EPC faults\n";
  if (r.security_event) {
    std::cout << "security event at event " << r.security_event->event_index << ": "
              << to_string(r.security_event->kind) << " (page " << r.security_event->page << "): "
              << r.security_event->detail << "\n";
    return kExitSecurity;
  }
  return kExitOk;
}

int cmd_compare(const Common& c) {
  const RunConfig cfg = resolve(c);
  if (c.print_config) {
    std::cout << to_json(cfg).dump(2) << "\n";
    return kExitOk;
  }
  if (cfg.models.size() < 2) throw ConfigError("models", "compare needs at least two models");
  const FilteredTrace trace = load_filtered(cfg);
  std::vector<std::pair<std::string, SimConfig>> configs;
  for (const auto& m : cfg.models) configs.emplace_back(m.label, m.sim);
  const auto rows = compare(configs, trace);
  ensure_dir(cfg.out);
  std::ostringstream csv;
  write_comparison_csv(csv, rows);
  write_file(cfg.out / "compare.csv", csv.str());
  bool security = false;
  std::cout << std::left << std::setw(20) << "label" << std::setw(14) << "model" << std::right << std::setw(12)
            << "normalized" << std::setw(16) << "cycles" << std::setw(12) << "faults" << std::setw(14) << "dram" << "\n";
  for (const auto& row : rows) {
    std::uint64_t dram = 0;
    for (auto n : row.report.dram_by_cause) dram += n;
    std::cout << std::left << std::setw(20) << row.label << std::setw(14) << row.report.model << std::right
              << std::setw(12) << std::fixed << std::setprecision(4) << row.normalized_performance << std::setw(16)
              << row.report.total_cycles << std::setw(12) << row.report.epc_faults << std::setw(14) << dram << "\n";
    security |= row.report.security_event.has_value();
  }
  return security ? kExitSecurity : kExitOk;
}

std::string mib(std::uint64_t bytes) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << static_cast<double>(bytes) / (1 << 20);
  return s.str();
}

int cmd_storage(const Common& c, const std::string& total, const std::string& epc, bool sgx_curve) {
  const RunConfig cfg = resolve(c);
  const std::uint64_t total_size = parse_size(total, "--total-size");
  const std::uint64_t epc_size = parse_size(epc, "--epc-size");
  const StorageBreakdown b = storage_breakdown(total_size, epc_size, cfg.sim.secscale.forest, cfg.sim.secscale.merkle);
  std::cout << std::left << std::setw(26) << "structure" << std::right << std::setw(16) << "bytes" << std::setw(12)
            << "MiB" << "\n";
  auto row = [](const std::string& name, std::uint64_t bytes) {
    std::cout << std::left << std::setw(26) << name << std::right << std::setw(16) << bytes << std::setw(12) << mib(bytes)
              << "\n";
  };
  row("mac forest", b.forest_bytes);
  row("  top level (in EPC)", b.forest_top_bytes);
  row("epc merkle tree", b.merkle_bytes);
  row("forest + merkle", b.combined_bytes);
  row("key table", b.key_table_bytes);
  std::cout << "top-level MACs: " << b.forest_top_macs << "\n";
  if (sgx_curve) {
    std::cout << "\ncounter tree over all of memory\n";
    for (std::uint64_t gib : {64, 128, 256, 512}) {
      const std::uint64_t bytes = merkle_storage_bytes(gib << 30, cfg.sim.secscale.merkle);
      row(std::to_string(gib) + " GiB", bytes);
    }
  }
  return kExitOk;
}

int cmd_attack(const Common& c, std::vector<std::string> kinds, std::uint64_t trials, std::uint64_t benign_ops) {
  const std::uint64_t base_seed = c.seed.value_or(1);
  std::vector<AttackKind> selected;
  if (kinds.empty() || (kinds.size() == 1 && kinds.front() == "all"))
    selected.assign(kAllAttackKinds.begin(), kAllAttackKinds.end());
  else
    for (const auto& k : kinds) {
      try {
        selected.push_back(parse_attack_kind(k));
      } catch (const ConfigError& e) {
        throw ConfigError("--kind", e.message());
      }
    }
  std::ostringstream csv;
  csv << "kind,trials,injected,detected,detected_before_barrier\n";
  bool pass = true;
  std::cout << std::left << std::setw(22) << "attack" << std::right << std::setw(10) << "injected" << std::setw(10)
            << "detected" << std::setw(16) << "before barrier" << "\n";
  for (AttackKind k : selected) {
    std::uint64_t injected = 0, detected = 0, early = 0;
    for (std::uint64_t s = 0; s < trials; ++s) {
      const TrialResult r = run_attack_trial(k, base_seed + s);
      injected += r.injected;
      detected += r.detected;
      early += r.before_barrier;
    }
    pass &= early == trials;
    csv << to_string(k) << "," << trials << "," << injected << "," << detected << "," << early << "\n";
    std::cout << std::left << std::setw(22) << to_string(k) << std::right << std::setw(10) << injected << std::setw(10)
              << detected << std::setw(16) << early << "\n";
  }
  if (benign_ops) {
    const BenignResult b = run_benign(ModelKind::SecScale, benign_ops, base_seed);
    std::cout << "benign: " << b.operations << " operations, " << b.security_events << " security events, "
              << b.read_mismatches << " read mismatches\n";
    csv << "benign," << b.operations << ",0," << b.security_events << ",0\n";
    pass &= b.security_events == 0 && b.read_mismatches == 0;
  }
  if (!c.out.empty()) {
    ensure_dir(c.out);
    write_file(fs::path(c.out) / "attack.csv", csv.str());
  }
  return pass ? kExitOk : kExitSuiteFailed;
}

int cmd_gen_trace(const Common& c, const std::string& pattern, std::optional<std::uint64_t> accesses,
                  const std::string& footprint, const std::string& path) {
  RunConfig cfg = resolve(c);
  nlohmann::json w = nlohmann::json::object();
  if (!pattern.empty()) w["pattern"] = pattern;
  if (accesses) w["accesses"] = *accesses;
  if (!footprint.empty()) w["footprint"] = footprint;
  cfg = parse_run_config({{"workload", w}}, cfg);
  if (c.print_config) {
    std::cout << to_json(cfg).dump(2) << "\n";
    return kExitOk;
  }
  const auto records = generate(cfg.workload.synthetic);
  write_trace_file(path, records);
  std::cout << "wrote " << records.size() << " records to " << path << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Secure-memory simulator: protection models, attacks and storage arithmetic"};
  app.require_subcommand(1);
  Common common;

  auto* run = app.add_subcommand("run", "simulate one model and write report.json and summary.csv");
  add_common(run, common);

  auto* cmp = app.add_subcommand("compare", "run several models on one trace and write compare.csv");
  add_common(cmp, common);

  std::string total = "512GiB", epc = "128MiB";
  bool sgx_curve = false;
  auto* storage = app.add_subcommand("storage", "print metadata storage for a memory size");
  add_common(storage, common);
  storage->add_option("--total-size", total, "protected memory size")->capture_default_str();
  storage->add_option("--epc-size", epc, "EPC size covered by the counter tree")->capture_default_str();
  storage->add_flag("--sgx-curve", sgx_curve, "also print a counter tree over all memory at 64 to 512 GiB");

  std::vector<std::string> kinds;
  std::uint64_t trials = 100, benign_ops = 100000;
  auto* attack = app.add_subcommand("attack", "run the attack suite; exit 0 only if every attack is caught");
  add_common(attack, common);
  attack->add_option("--kind", kinds, "attack kind(s), or all")->delimiter(',');
  attack->add_option("--trials", trials, "seeds per kind")->capture_default_str();
  attack->add_option("--benign-ops", benign_ops, "benign operations checked for false positives")->capture_default_str();

  std::string pattern, footprint, trace_out = "trace.txt";
  std::optional<std::uint64_t> accesses;
  auto* gen = app.add_subcommand("gen-trace", "write a synthetic trace (gzip if the name ends in .gz)");
  add_common(gen, common);
  gen->add_option("--pattern", pattern, "sequential, uniform, zipf, strided or pointer-chase");
  gen->add_option("--accesses", accesses, "number of records");
  gen->add_option("--footprint", footprint, "bytes touched, e.g. 32MiB");
  gen->add_option("-o,--output", trace_out, "trace file")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run) return cmd_run(common);
    if (*cmp) return cmd_compare(common);
    if (*storage) return cmd_storage(common, total, epc, sgx_curve);
    if (*attack) return cmd_attack(common, kinds, trials, benign_ops);
    if (*gen) return cmd_gen_trace(common, pattern, accesses, footprint, trace_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "trace error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
