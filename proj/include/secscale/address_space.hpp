#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "secscale/common.hpp"

namespace secscale {

enum class Region : std::uint8_t { Epc, Eepc, KeyTable, ForestStorage, Scratch };
inline constexpr std::size_t kRegionCount = 5;

std::string_view to_string(Region r);

// Who a DRAM transaction was issued on behalf of.
enum class Cause : std::uint8_t { Data, Merkle, Forest, KeyTable };
inline constexpr std::size_t kCauseCount = 4;

std::string_view to_string(Cause c);

inline constexpr std::uint64_t kKeySlotBytes = 16;

struct LayoutConfig {
  std::uint64_t total_size = 0;
  std::uint64_t epc_base = 0;
  std::uint64_t epc_size = 128ull << 20;
  std::uint64_t scratch_pages = 16;
  // Bytes of lower-level forest nodes kept in physical memory (the top level lives in the EPC).
  std::uint64_t forest_bytes = 0;
};

// Physical memory map. EPC and scratch sit at epc_base; the Key Table and the
// lower forest levels are carved from the top of memory; everything else is eEPC.
class MemoryLayout {
 public:
  explicit MemoryLayout(const LayoutConfig& cfg);

  Region classify(PhysAddr addr) const;
  Region classify(PageNum page) const { return classify(page_base(page)); }
  bool is_eepc(PageNum page) const;

  // Slot of the wrapped key for an eEPC page. Indexed by physical page number.
  PhysAddr key_table_slot(PageNum page) const;

  std::uint64_t total_size() const { return total_size_; }
  std::uint64_t total_pages() const { return total_size_ / kPageSize; }
  std::uint64_t epc_base() const { return epc_base_; }
  std::uint64_t epc_size() const { return epc_size_; }
  std::uint64_t scratch_base() const { return epc_base_ + epc_size_; }
  std::uint64_t scratch_pages() const { return scratch_pages_; }
  std::uint64_t forest_base() const { return forest_base_; }
  std::uint64_t forest_size() const { return forest_size_; }
  std::uint64_t key_table_base() const { return key_table_base_; }
  std::uint64_t key_table_size() const { return key_table_size_; }

  std::uint64_t region_size(Region r) const;
  std::uint64_t eepc_pages() const { return region_size(Region::Eepc) / kPageSize; }
  // eEPC pages in ascending order: the index-th page of the eEPC.
  PageNum eepc_page(std::uint64_t index) const;

 private:
  std::uint64_t total_size_;
  std::uint64_t epc_base_;
  std::uint64_t epc_size_;
  std::uint64_t scratch_pages_;
  std::uint64_t forest_base_;
  std::uint64_t forest_size_;
  std::uint64_t key_table_base_;
  std::uint64_t key_table_size_;
};

// Byte-exact, sparsely allocated model of physical DRAM. Counted accessors
// model real transactions; peek/poke are for oracles and the adversary.
class EmulatedDram {
 public:
  explicit EmulatedDram(const MemoryLayout& layout) : layout_(&layout) {}

  void read(PhysAddr addr, std::span<std::uint8_t> out, Cause cause);
  void write(PhysAddr addr, std::span<const std::uint8_t> in, Cause cause);
  std::vector<std::uint8_t> read(PhysAddr addr, std::size_t len, Cause cause);

  void peek(PhysAddr addr, std::span<std::uint8_t> out) const;
  void poke(PhysAddr addr, std::span<const std::uint8_t> in);

  std::uint64_t reads(Region r) const { return reads_[static_cast<std::size_t>(r)]; }
  std::uint64_t writes(Region r) const { return writes_[static_cast<std::size_t>(r)]; }
  std::uint64_t accesses(Cause c) const { return by_cause_[static_cast<std::size_t>(c)]; }
  std::uint64_t total_accesses() const;
  void reset_counters();

  const MemoryLayout& layout() const { return *layout_; }
  std::size_t allocated_pages() const { return pages_.size(); }

 private:
  Region check_range(PhysAddr addr, std::size_t len) const;
  PageBytes& page_for_write(std::uint64_t page);

  const MemoryLayout* layout_;
  std::unordered_map<std::uint64_t, PageBytes> pages_;
  std::array<std::uint64_t, kRegionCount> reads_{};
  std::array<std::uint64_t, kRegionCount> writes_{};
  std::array<std::uint64_t, kCauseCount> by_cause_{};
};

}  // namespace secscale
