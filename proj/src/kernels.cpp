#include "secscale/kernels.hpp"

#include <omp.h>

namespace secscale::kernels {

namespace {

Mac parent_at(const Ssk& ssk, std::span<const Mac> children, unsigned arity, unsigned level, std::size_t g) {
  std::vector<Mac> group(arity);
  for (unsigned k = 0; k < arity && g * arity + k < children.size(); ++k) group[k] = children[g * arity + k];
  return level_mac(ssk, group, arity, level, g);
}

std::size_t groups(std::size_t n, unsigned arity) { return (n + arity - 1) / arity; }

}  // namespace

std::vector<Mac> leaf_macs_serial(std::span<const LeafInput> pages) {
  std::vector<Mac> out(pages.size());
  for (std::size_t i = 0; i < pages.size(); ++i) out[i] = page_mac(pages[i].key, *pages[i].bytes);
  return out;
}

std::vector<Mac> leaf_macs_parallel(std::span<const LeafInput> pages) {
  std::vector<Mac> out(pages.size());
  const auto n = static_cast<std::int64_t>(pages.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) out[i] = page_mac(pages[i].key, *pages[i].bytes);
  return out;
}

std::vector<Mac> parent_level_serial(const Ssk& ssk, std::span<const Mac> children, unsigned arity, unsigned level) {
  std::vector<Mac> out(groups(children.size(), arity));
  for (std::size_t g = 0; g < out.size(); ++g) out[g] = parent_at(ssk, children, arity, level, g);
  return out;
}

std::vector<Mac> parent_level_parallel(const Ssk& ssk, std::span<const Mac> children, unsigned arity, unsigned level) {
  std::vector<Mac> out(groups(children.size(), arity));
  const auto n = static_cast<std::int64_t>(out.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t g = 0; g < n; ++g) out[g] = parent_at(ssk, children, arity, level, static_cast<std::size_t>(g));
  return out;
}

std::vector<std::vector<Mac>> forest_levels(const Ssk& ssk, std::vector<Mac> leaves, const ForestConfig& cfg,
                                            bool parallel) {
  cfg.validate();
  std::vector<std::vector<Mac>> levels;
  levels.push_back(std::move(leaves));
  for (unsigned l = 0; l + 1 < cfg.levels; ++l) {
    const auto& below = levels.back();
    levels.push_back(parallel ? parent_level_parallel(ssk, below, cfg.arities[l], l + 1)
                              : parent_level_serial(ssk, below, cfg.arities[l], l + 1));
  }
  return levels;
}

std::vector<Report> run_batch_serial(const std::vector<SimConfig>& configs, const FilteredTrace& trace) {
  std::vector<Report> out;
  for (const auto& c : configs) out.push_back(run(c, trace));
  return out;
}

std::vector<Report> run_batch_parallel(const std::vector<SimConfig>& configs, const FilteredTrace& trace) {
  std::vector<Report> out(configs.size());
  const auto n = static_cast<std::int64_t>(configs.size());
  // Exceptions cannot leave an OpenMP region; the first one is rethrown afterwards.
  std::vector<std::exception_ptr> errors(configs.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      out[i] = run(configs[i], trace);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace secscale::kernels
