#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "secscale/adversary.hpp"
#include "secscale/sim.hpp"
#include "secscale/workload.hpp"

namespace secscale {

struct WorkloadConfig {
  // Trace file; when empty the synthetic spec is used.
  std::filesystem::path trace;
  SyntheticSpec synthetic;
};

struct ModelEntry {
  std::string label;
  SimConfig sim;
};

struct RunConfig {
  SimConfig sim;
  WorkloadConfig workload;
  // For `compare`: the top-level config with each entry's overrides applied.
  std::vector<ModelEntry> models;
  // The raw `models` entries, re-applied whenever a later layer changes the top level.
  nlohmann::json model_specs = nlohmann::json::array();
  std::vector<ScriptedAttack> attacks;
  std::filesystem::path out = "out";
};

// Applies `j` on top of `base`. Unknown keys and bad values throw ConfigError
// naming the key path, e.g. "secscale.forest.arities[1]".
RunConfig parse_run_config(const nlohmann::json& j, const RunConfig& base = {});
RunConfig load_run_config(const std::filesystem::path& path, const RunConfig& base = {});
nlohmann::ordered_json to_json(const RunConfig& c);

// "4096", "64KiB", "128MiB", "512GiB" or a JSON integer.
std::uint64_t parse_size(const nlohmann::json& v, const std::string& key_path);

std::vector<std::string> preset_names();
// Throws ConfigError for an unknown name.
const nlohmann::json& preset(std::string_view name);

// Records the run config was given: the trace file or the generated synthetic trace.
std::vector<TraceRecord> load_workload(const WorkloadConfig& w);

}  // namespace secscale
