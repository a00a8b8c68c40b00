#include "doctest.h"
#include "secscale/address_space.hpp"

using namespace secscale;

TEST_CASE("layout places epc and scratch at the base, key table and forest at the top") {
  const MemoryLayout l(LayoutConfig{64ull << 20, 0, 1ull << 20, 16, 1ull << 20});
  CHECK(l.classify(PhysAddr{0}) == Region::Epc);
  CHECK(l.classify(PhysAddr{l.scratch_base()}) == Region::Scratch);
  CHECK(l.classify(PhysAddr{l.key_table_base()}) == Region::KeyTable);
  CHECK(l.classify(PhysAddr{l.forest_base()}) == Region::ForestStorage);
  CHECK(l.key_table_size() == l.total_pages() * kKeySlotBytes);
  std::uint64_t sum = 0;
  for (Region r : {Region::Epc, Region::Eepc, Region::KeyTable, Region::ForestStorage, Region::Scratch})
    sum += l.region_size(r);
  CHECK(sum == l.total_size());

  const PageNum first = l.eepc_page(0);
  CHECK(l.is_eepc(first));
  CHECK(!l.is_eepc(PageNum{0}));
  CHECK(l.eepc_page(1).value == first.value + 1);
  const PhysAddr s0 = l.key_table_slot(first);
  const PhysAddr s1 = l.key_table_slot(l.eepc_page(1));
  CHECK(s1.value - s0.value == kKeySlotBytes);
  CHECK(l.classify(s0) == Region::KeyTable);
  CHECK_THROWS(l.eepc_page(l.eepc_pages()));
}

TEST_CASE("dram counts transactions by region and cause, peek and poke are free") {
  const MemoryLayout l(LayoutConfig{16ull << 20, 0, 1ull << 20, 4, 0});
  EmulatedDram d(l);
  const PhysAddr a = page_base(l.eepc_page(3));
  std::vector<std::uint8_t> v(64, 0xab);
  d.write(a, v, Cause::Data);
  CHECK(d.read(a, 64, Cause::Forest) == v);
  CHECK(d.writes(Region::Eepc) == 1);
  CHECK(d.reads(Region::Eepc) == 1);
  CHECK(d.accesses(Cause::Forest) == 1);
  CHECK(d.total_accesses() == 2);
  std::array<std::uint8_t, 8> p{};
  d.peek(a, p);
  CHECK(p[0] == 0xab);
  d.poke(a, std::array<std::uint8_t, 1>{1});
  CHECK(d.total_accesses() == 2);
  // Untouched memory reads as zero.
  std::array<std::uint8_t, 4> z{9, 9, 9, 9};
  d.peek(page_base(l.eepc_page(100)), z);
  CHECK(z == std::array<std::uint8_t, 4>{});
  d.reset_counters();
  CHECK(d.total_accesses() == 0);
}
