#include <map>
#include <random>

#include "doctest.h"
#include "oracle.hpp"
#include "secscale/epc_merkle.hpp"

using namespace secscale;

namespace {

struct Fixture {
  MemoryLayout layout{LayoutConfig{16ull << 20, 0, 4ull << 20, 4, 0}};
  EmulatedDram dram{layout};
  MerkleTreeConfig cfg;
  ProtectedEpc::Keys keys;
  std::unique_ptr<ProtectedEpc> epc;
  std::unique_ptr<oracle::MerkleModel> model;

  Fixture(std::uint64_t pages, std::vector<unsigned> arities) {
    cfg.arities = std::move(arities);
    keys.data_key[0] = 1;
    keys.mac_key[0] = 2;
    epc = std::make_unique<ProtectedEpc>(dram, PhysAddr{0}, pages, cfg, keys);
    epc->initialize();
    model = std::make_unique<oracle::MerkleModel>(epc->tree().geometry());
    epc->set_write_observer([this](std::uint64_t p, unsigned b) { model->write(p, b); });
  }

  oracle::CheckResult check() const { return oracle::check_merkle(*epc, dram, *model, keys.mac_key); }
};

Block pattern(std::uint64_t v) {
  Block b;
  for (unsigned i = 0; i < b.size(); ++i) b[i] = static_cast<std::uint8_t>(v * 31 + i);
  return b;
}

}  // namespace

TEST_CASE("counter tree geometry for a 128 MiB EPC") {
  const auto g = MerkleGeometry::build(32768, MerkleTreeConfig{});
  CHECK(g.level_nodes == std::vector<std::uint64_t>{32768, 1024, 32});
  CHECK(g.root_children == 32);
  CHECK(g.stored_bytes() == (32768 + 1024 + 32) * 64);
  CHECK(merkle_storage_bytes(128ull << 20, MerkleTreeConfig{}) == 2164736);
  CHECK(minor_bits_for(64) == 6);
  CHECK(minor_bits_for(32) == 12);
  CHECK(minor_bits_for(4) == 56);
  CHECK_THROWS_AS(MerkleGeometry::build(0, MerkleTreeConfig{}), DomainError);
}

TEST_CASE("node minors pack without disturbing neighbours") {
  MerkleNode n;
  n.set_major(0x1122334455667788ull);
  for (unsigned i = 0; i < 64; ++i) n.set_minor(i, 6, (i * 13) & 63);
  n.set_mac(Mac{0xdeadbeef});
  for (unsigned i = 0; i < 64; ++i) CHECK(n.minor(i, 6) == ((i * 13) & 63));
  CHECK(n.major() == 0x1122334455667788ull);
  CHECK(n.mac().value == 0xdeadbeef);
  CHECK(n.child_counter(1, 6) == (0x1122334455667788ull << 6) + 13);
}

TEST_CASE("fresh store verifies and reads zeros") {
  Fixture f(100, {32});
  CHECK(f.check().mismatches == 0);
  CHECK(f.epc->read_block(7, 3).data == Block{});
  CHECK(f.epc->blocks_consistent());
}

TEST_CASE("random writes with counter overflow match the reference tree") {
  // Arity 64 gives 6-bit internal minors, so both leaf and internal overflows occur.
  Fixture f(200, {64});
  std::mt19937_64 rng(5);
  std::map<std::pair<std::uint64_t, unsigned>, Block> written;
  for (int i = 0; i < 6000; ++i) {
    const std::uint64_t p = (rng() % 4 == 0) ? rng() % 200 : rng() % 3;
    const unsigned b = (rng() % 2) ? 0 : static_cast<unsigned>(rng() % 64);
    const Block d = pattern(rng());
    f.epc->write_block(p, b, d);
    written[{p, b}] = d;
  }
  const auto r = f.check();
  CHECK(r.checked > 200 * 65);
  CHECK(r.mismatches == 0);
  for (const auto& [pb, d] : written) CHECK(f.epc->read_block(pb.first, pb.second).data == d);
  CHECK(f.epc->blocks_consistent());
}

TEST_CASE("three-level tree stays consistent") {
  Fixture f(300, {4, 4});
  std::mt19937_64 rng(8);
  for (int i = 0; i < 3000; ++i) f.epc->write_block(rng() % 300, rng() % 64, pattern(i));
  CHECK(f.epc->tree().geometry().depth() >= 3);
  CHECK(f.check().mismatches == 0);
}

TEST_CASE("tampered node is caught on the next uncached read") {
  Fixture f(100, {32});
  f.epc->write_block(10, 1, pattern(1));
  const PhysAddr leaf = f.epc->tree().node_addr(0, 10);
  std::array<std::uint8_t, 1> x;
  f.dram.peek(leaf + 9, x);
  x[0] ^= 0x10;
  f.dram.poke(leaf + 9, x);
  f.epc->tree().cache().clear();
  CHECK_THROWS_AS(f.epc->read_block(10, 1), CatastrophicFailure);
}

TEST_CASE("replayed block, MAC and leaf are caught") {
  Fixture f(100, {32});
  f.epc->write_block(10, 1, pattern(1));
  auto grab = [&](PhysAddr a, std::size_t n) { return f.dram.read(a, n, Cause::Data); };
  const auto blk = grab(f.epc->data_addr(10, 1), 64);
  const auto mac = grab(f.epc->mac_addr(10, 1), 8);
  const auto leaf = grab(f.epc->tree().node_addr(0, 10), 64);
  f.epc->write_block(10, 1, pattern(2));
  f.dram.poke(f.epc->data_addr(10, 1), blk);
  f.dram.poke(f.epc->mac_addr(10, 1), mac);
  f.dram.poke(f.epc->tree().node_addr(0, 10), leaf);
  f.epc->tree().cache().clear();
  CHECK_THROWS_AS(f.epc->read_block(10, 1), CatastrophicFailure);
}

TEST_CASE("flipped ciphertext bit fails the block MAC") {
  Fixture f(50, {32});
  f.epc->write_block(3, 4, pattern(3));
  std::array<std::uint8_t, 1> x;
  f.dram.peek(f.epc->data_addr(3, 4), x);
  x[0] ^= 1;
  f.dram.poke(f.epc->data_addr(3, 4), x);
  try {
    f.epc->read_block(3, 4);
    FAIL("no exception");
  } catch (const CatastrophicFailure& e) {
    CHECK(e.kind() == SecurityEventKind::EpcBlockMacMismatch);
  }
}

TEST_CASE("counter cache is direct mapped") {
  CounterCache c(128);
  CHECK(c.lines() == 2);
  MerkleNode n;
  n.set_major(4);
  c.insert(PhysAddr{0}, n);
  REQUIRE(c.lookup(PhysAddr{0}) != nullptr);
  c.insert(PhysAddr{128}, MerkleNode{});
  CHECK(c.lookup(PhysAddr{0}) == nullptr);
  CHECK(c.hits() == 1);
  CHECK(c.misses() == 1);
}
