// Serial reference kernels against their OpenMP versions.
#include <benchmark/benchmark.h>

#include <random>

#include "secscale/kernels.hpp"

using namespace secscale;

namespace {

struct Pages {
  std::vector<PageBytes> bytes;
  std::vector<kernels::LeafInput> inputs;

  explicit Pages(std::size_t n) : bytes(n) {
    std::mt19937_64 rng(1);
    for (auto& p : bytes)
      for (auto& b : p) b = static_cast<std::uint8_t>(rng());
    for (std::size_t i = 0; i < n; ++i) {
      Random128 r{};
      r[0] = static_cast<std::uint8_t>(i);
      inputs.push_back({compose_page_key(7, 1, r, static_cast<std::uint32_t>(i)), &bytes[i]});
    }
  }
};

std::vector<Mac> random_macs(std::size_t n) {
  std::mt19937_64 rng(2);
  std::vector<Mac> out(n);
  for (auto& m : out) m.value = rng();
  return out;
}

void BM_LeafMacsSerial(benchmark::State& st) {
  Pages p(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(kernels::leaf_macs_serial(p.inputs));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_LeafMacsParallel(benchmark::State& st) {
  Pages p(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(kernels::leaf_macs_parallel(p.inputs));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_ParentLevelSerial(benchmark::State& st) {
  const auto children = random_macs(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(kernels::parent_level_serial(Ssk{}, children, 16, 1));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_ParentLevelParallel(benchmark::State& st) {
  const auto children = random_macs(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(kernels::parent_level_parallel(Ssk{}, children, 16, 1));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

FilteredTrace batch_trace() {
  SyntheticSpec s;
  s.footprint = 4ull << 20;
  s.accesses = 1500;
  s.accesses_per_instruction = 1e-3;
  CacheConfig c;
  c.l2_bytes = 256 << 10;
  return llc_filter(generate(s), c);
}

std::vector<SimConfig> batch_configs() {
  std::vector<SimConfig> out;
  for (auto m : {ModelKind::Baseline, ModelKind::SgxClient, ModelKind::PenglaiMmt, ModelKind::SecScale}) {
    SimConfig c;
    c.model = m;
    out.push_back(c);
  }
  return out;
}

void BM_RunBatchSerial(benchmark::State& st) {
  const auto trace = batch_trace();
  const auto configs = batch_configs();
  for (auto _ : st) benchmark::DoNotOptimize(kernels::run_batch_serial(configs, trace));
}

void BM_RunBatchParallel(benchmark::State& st) {
  const auto trace = batch_trace();
  const auto configs = batch_configs();
  for (auto _ : st) benchmark::DoNotOptimize(kernels::run_batch_parallel(configs, trace));
}

}  // namespace

BENCHMARK(BM_LeafMacsSerial)->Arg(256)->Arg(4096);
BENCHMARK(BM_LeafMacsParallel)->Arg(256)->Arg(4096);
BENCHMARK(BM_ParentLevelSerial)->Arg(1 << 16);
BENCHMARK(BM_ParentLevelParallel)->Arg(1 << 16);
BENCHMARK(BM_RunBatchSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RunBatchParallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
