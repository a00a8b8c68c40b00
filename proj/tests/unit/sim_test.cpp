#include <sstream>

#include "doctest.h"
#include "secscale/kernels.hpp"
#include "secscale/sim.hpp"

using namespace secscale;

namespace {

FilteredTrace small_trace(std::uint64_t seed, Pattern p = Pattern::Uniform) {
  SyntheticSpec s;
  s.pattern = p;
  s.footprint = 4 << 20;
  s.accesses = 1500;
  s.seed = seed;
  s.syscall_every = 300;
  CacheConfig c;
  c.l2_bytes = 64 << 10;
  return llc_filter(generate(s), c);
}

std::string json_of(const Report& r) {
  std::ostringstream o;
  write_report_json(o, r);
  return o.str();
}

}  // namespace

TEST_CASE("every model returns the expected data") {
  const auto t = small_trace(3);
  for (ModelKind m : {ModelKind::Baseline, ModelKind::SgxClient, ModelKind::Dfp, ModelKind::PenglaiMmt,
                      ModelKind::SecScale}) {
    SimConfig cfg;
    cfg.model = m;
    const Report r = run(cfg, t);
    CAPTURE(to_string(m));
    CHECK(r.fill_mismatches == 0);
    CHECK(!r.security_event);
    CHECK(r.total_cycles >= r.instructions);
    CHECK(r.performance == doctest::Approx(double(r.instructions) / double(r.total_cycles)));
    CHECK(parse_model(to_string(m)) == m);
  }
}

TEST_CASE("runs are deterministic") {
  const auto t = small_trace(4);
  SimConfig cfg;
  CHECK(json_of(run(cfg, t)) == json_of(run(cfg, t)));
}

TEST_CASE("protection costs cycles") {
  const auto t = small_trace(5);
  SimConfig base;
  base.model = ModelKind::Baseline;
  SimConfig sgx = base;
  sgx.model = ModelKind::SgxClient;
  SimConfig sec = base;
  sec.model = ModelKind::SecScale;
  const auto rb = run(base, t), rs = run(sgx, t), rx = run(sec, t);
  CHECK(rb.total_cycles < rx.total_cycles);
  CHECK(rx.total_cycles < rs.total_cycles);
  CHECK(rx.epc_faults > 0);
  CHECK(rx.max_forest_accesses_per_verification <= 4);
  CHECK(rx.min_read_fault_critical_reads == 2);
  CHECK(rx.max_read_fault_critical_reads == 2);
}

TEST_CASE("sgx fault penalty raises cycles monotonically") {
  const auto t = small_trace(6);
  Cycle prev = 0;
  for (Cycle p : {5000, 10000, 20000, 40000}) {
    SimConfig c;
    c.model = ModelKind::SgxClient;
    c.latency.sgx_fault_penalty = p;
    const Cycle now = run(c, t).total_cycles;
    CHECK(now > prev);
    prev = now;
  }
}

TEST_CASE("turning off integrity-tree costs only removes cycles") {
  const auto t = small_trace(7);
  for (ModelKind m : {ModelKind::SgxClient, ModelKind::PenglaiMmt}) {
    SimConfig on;
    on.model = m;
    SimConfig off = on;
    off.integrity_tree_costs = false;
    CHECK(run(off, t).total_cycles < run(on, t).total_cycles);
  }
}

TEST_CASE("report ratios follow their counters") {
  Report r;
  r.instructions = 2000;
  r.total_cycles = 4000;
  r.evictions = 10;
  r.forest_updates = 8;
  r.clubbed_updates = 2;
  r.top_cache_hits = 3;
  r.top_cache_misses = 1;
  r.finalize();
  CHECK(r.performance == doctest::Approx(0.5));
  CHECK(r.evictions_per_1k_instructions == doctest::Approx(5.0));
  CHECK(r.top_cache_hit_rate == doctest::Approx(0.75));
}

TEST_CASE("comparison normalizes against the unprotected run") {
  const auto t = small_trace(8);
  SimConfig sgx;
  sgx.model = ModelKind::SgxClient;
  SimConfig sec;
  const auto rows = compare({{"sgx", sgx}, {"secscale", sec}}, t);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].normalized_performance > 0);
  CHECK(rows[0].normalized_performance < rows[1].normalized_performance);
  CHECK(rows[1].normalized_performance <= 1.0);
  std::ostringstream csv;
  write_comparison_csv(csv, rows);
  CHECK(csv.str().find("secscale") != std::string::npos);
}

TEST_CASE("serial and parallel batch runs produce the same reports") {
  const auto t = small_trace(9);
  std::vector<SimConfig> cfgs(3);
  cfgs[0].model = ModelKind::Baseline;
  cfgs[1].model = ModelKind::Dfp;
  cfgs[2].model = ModelKind::SecScale;
  const auto a = kernels::run_batch_serial(cfgs, t);
  const auto b = kernels::run_batch_parallel(cfgs, t);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(json_of(a[i]) == json_of(b[i]));
}

TEST_CASE("storage breakdown at 512 GiB") {
  const auto b = storage_breakdown(512ull << 30, 128ull << 20, ForestConfig{}, MerkleTreeConfig{});
  CHECK(b.forest_bytes == 1096ull << 20);
  CHECK(b.merkle_bytes == 2164736);
  CHECK(b.combined_bytes == b.forest_bytes + b.merkle_bytes);
  CHECK(b.key_table_bytes == 2ull << 30);
  CHECK(b.forest_top_macs == 1ull << 20);
  CHECK(b.forest_top_bytes == 8ull << 20);
}

TEST_CASE("bad simulator configs are rejected") {
  SimConfig c;
  c.secscale.eshr_entries = 0;
  CHECK_THROWS(make_model(c));
  c = {};
  c.layout.epc_size = 4096;
  CHECK_THROWS(make_model(c));
}
