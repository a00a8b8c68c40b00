#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "secscale/crypto_engine.hpp"
#include "secscale/sim.hpp"

// Batch kernels with an OpenMP version and a serial reference. Results are
// identical; the serial versions exist for tests and the benchmark.
namespace secscale::kernels {

struct LeafInput {
  PageKey key;
  const PageBytes* bytes = nullptr;
};

std::vector<Mac> leaf_macs_serial(std::span<const LeafInput> pages);
std::vector<Mac> leaf_macs_parallel(std::span<const LeafInput> pages);

// Parents of `children` at forest level `level` (children sit at level - 1).
// A short last group is padded with zero MACs.
std::vector<Mac> parent_level_serial(const Ssk& ssk, std::span<const Mac> children, unsigned arity, unsigned level);
std::vector<Mac> parent_level_parallel(const Ssk& ssk, std::span<const Mac> children, unsigned arity, unsigned level);

// Every level of a forest over `leaves`, bottom-up; the last entry is the top level.
std::vector<std::vector<Mac>> forest_levels(const Ssk& ssk, std::vector<Mac> leaves, const ForestConfig& cfg,
                                            bool parallel = true);

// Independent runs on one trace.
std::vector<Report> run_batch_serial(const std::vector<SimConfig>& configs, const FilteredTrace& trace);
std::vector<Report> run_batch_parallel(const std::vector<SimConfig>& configs, const FilteredTrace& trace);

int max_threads();

}  // namespace secscale::kernels
