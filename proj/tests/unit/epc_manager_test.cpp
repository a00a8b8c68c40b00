#include <random>
#include <set>

#include "doctest.h"
#include "oracle.hpp"
#include "secscale/sim.hpp"

using namespace secscale;

namespace {

Block random_block(std::mt19937_64& rng) {
  Block b;
  for (auto& x : b) x = static_cast<std::uint8_t>(rng());
  return b;
}

}  // namespace

TEST_CASE("random accesses against a plain reference, with forest and tree oracles") {
  for (std::uint64_t seed : {1, 2, 3}) {
    SimConfig cfg;
    cfg.seed = seed;
    cfg.secscale.epc_data_pages = 16;
    cfg.secscale.eshr_entries = seed == 3 ? 1 : 4;
    cfg.secscale.clubbing = seed != 2;
    cfg.secscale.mvc.deferred = seed != 1;
    SecScaleModel m(cfg);
    BaselineModel ref(cfg);
    auto& mgr = m.manager();
    oracle::MerkleModel tree(mgr.data_epc().tree().geometry());
    mgr.data_epc().set_write_observer([&](std::uint64_t p, unsigned b) { tree.write(p, b); });
    m.register_enclave(1, 200);
    m.register_enclave(2, 50);
    ref.register_enclave(1, 200);
    ref.register_enclave(2, 50);
    std::mt19937_64 rng(seed);
    for (int i = 0; i < 3000; ++i) {
      const EnclaveId e = rng() % 4 ? 1 : 2;
      const std::uint64_t va = (rng() % (e == 1 ? 200 : 50)) * kPageSize + (rng() % 64) * kBlockSize;
      if (rng() % 3 == 0) {
        const Block d = random_block(rng);
        m.write(e, va, d);
        ref.write(e, va, d);
      } else {
        REQUIRE(m.read(e, va) == ref.read(e, va));
      }
      if (i % 500 == 0) m.syscall(e);
    }
    m.finish();
    CAPTURE(seed);
    CHECK(oracle::check_forest(mgr, m.dram()).mismatches == 0);
    CHECK(oracle::check_merkle(mgr.data_epc(), m.dram(), tree, mgr.keys().epc.mac_key).mismatches == 0);
    CHECK(mgr.stats().faults > 100);
    CHECK(mgr.stats().min_read_fault_critical_reads == 2);
    CHECK(mgr.stats().max_read_fault_critical_reads == 2);
    CHECK(mgr.stats().max_live_entries <= cfg.secscale.eshr_entries);
    CHECK(mgr.forest().stats().max_verify_accesses <= 4);
  }
}

TEST_CASE("a read fault resumes after the block and its key slot") {
  SimConfig cfg;
  cfg.secscale.epc_data_pages = 4;
  SecScaleModel m(cfg);
  auto& mgr = m.manager();
  m.register_enclave(1, 16);
  Block d{};
  d[0] = 7;
  m.write(1, 10 * kPageSize, d);
  for (std::uint64_t p = 0; p < 8; ++p) m.read(1, p * kPageSize);  // pushes page 10 out
  m.finish();
  REQUIRE(!mgr.resident_slot(*mgr.page_table().lookup(1, 10)));
  const auto r = mgr.access(1, 10 * kPageSize + 64, AccessKind::Read);
  CHECK(r.outcome == Outcome::FaultStarted);
  CHECK(r.critical_reads == 2);
  CHECK(m.read(1, 10 * kPageSize) == d);
}

TEST_CASE("each eviction writes a fresh key") {
  SimConfig cfg;
  cfg.secscale.epc_data_pages = 4;
  SecScaleModel m(cfg);
  auto& mgr = m.manager();
  m.register_enclave(1, 16);
  const PageNum phys = *mgr.page_table().lookup(1, 0);
  std::set<std::array<std::uint8_t, 16>> slots;
  for (int i = 0; i < 20; ++i) {
    m.write(1, 0, Block{});
    mgr.flush_page(1, 0);
    m.finish();
    std::array<std::uint8_t, 16> s;
    m.dram().peek(m.layout().key_table_slot(phys), s);
    slots.insert(s);
    REQUIRE(mgr.stored_key(phys, 1).has_value());
  }
  CHECK(slots.size() == 20);
}

TEST_CASE("scratch pages are shared and unprotected") {
  SimConfig cfg;
  SecScaleModel m(cfg);
  m.register_enclave(1, 8);
  m.register_enclave(2, 8);
  Block d{};
  d[5] = 9;
  const std::uint64_t va = kScratchVpageBase * kPageSize;
  m.write(1, va, d);
  CHECK(m.read(2, va) == d);
  CHECK(m.manager().stats().scratch_accesses == 2);
}

TEST_CASE("an enclave cannot be registered twice or beyond the eEPC") {
  SimConfig cfg;
  SecScaleModel m(cfg);
  m.register_enclave(1, 8);
  CHECK_THROWS_AS(m.register_enclave(1, 8), DomainError);
  CHECK_THROWS(m.register_enclave(2, m.layout().eepc_pages()));
}

TEST_CASE("a syscall is a barrier for pending verification") {
  SimConfig cfg;
  cfg.secscale.epc_data_pages = 4;
  SecScaleModel m(cfg);
  auto& mgr = m.manager();
  m.register_enclave(1, 32);
  for (std::uint64_t p = 0; p < 32; ++p) m.write(1, p * kPageSize, Block{});
  for (std::uint64_t p = 0; p < 32; ++p) m.read(1, p * kPageSize);
  m.syscall(1);
  CHECK(mgr.mvc().depth() == 0);
  CHECK(mgr.stats().barriers >= 1);
}

TEST_CASE("the oracles notice a single corrupted node") {
  SimConfig cfg;
  cfg.secscale.epc_data_pages = 8;
  SecScaleModel m(cfg);
  auto& mgr = m.manager();
  oracle::MerkleModel tree(mgr.data_epc().tree().geometry());
  mgr.data_epc().set_write_observer([&](std::uint64_t p, unsigned b) { tree.write(p, b); });
  m.register_enclave(1, 64);
  for (std::uint64_t p = 0; p < 64; ++p) m.write(1, p * kPageSize, Block{1});
  m.finish();
  REQUIRE(oracle::check_forest(mgr, m.dram()).mismatches == 0);
  REQUIRE(oracle::check_merkle(mgr.data_epc(), m.dram(), tree, mgr.keys().epc.mac_key).mismatches == 0);

  const PageNum p = *mgr.page_table().lookup(1, 0);
  const PhysAddr leaf = mgr.forest().node_addr(0, p.value);
  std::array<std::uint8_t, 1> x;
  m.dram().peek(leaf, x);
  x[0] ^= 1;
  m.dram().poke(leaf, x);
  CHECK(oracle::check_forest(mgr, m.dram()).mismatches == 1);

  const PhysAddr node = mgr.data_epc().tree().node_addr(0, 3);
  m.dram().peek(node + 20, x);
  x[0] ^= 4;
  m.dram().poke(node + 20, x);
  CHECK(oracle::check_merkle(mgr.data_epc(), m.dram(), tree, mgr.keys().epc.mac_key).mismatches == 1);
}
