#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "secscale/address_space.hpp"
#include "secscale/crypto_engine.hpp"
#include "secscale/epc_merkle.hpp"

namespace secscale {

struct ForestConfig {
  unsigned levels = 3;
  // Grouping arity per step, bottom-up; size must be levels - 1.
  std::vector<unsigned> arities{16, 8};
  unsigned top_cache_entries = 8;

  void validate() const;
  std::uint64_t region_pages() const;
};

// MAC counts per level over `pages` leaves (one leaf per physical page).
struct ForestGeometry {
  std::vector<std::uint64_t> level_count;
  std::vector<std::uint64_t> level_offset;  // byte offsets of the stored lower levels
  std::uint64_t region_pages = 0;

  static ForestGeometry build(std::uint64_t pages, const ForestConfig& cfg);
  unsigned levels() const { return static_cast<unsigned>(level_count.size()); }
  std::uint64_t top_count() const { return level_count.back(); }
  std::uint64_t total_macs() const;
  std::uint64_t lower_bytes() const;
};

std::uint64_t forest_storage_bytes(std::uint64_t total_size, const ForestConfig& cfg);
std::uint64_t forest_lower_bytes(std::uint64_t total_size, const ForestConfig& cfg);
std::uint64_t forest_top_bytes(std::uint64_t total_size, const ForestConfig& cfg);
std::uint64_t subtree_region_of(PageNum page, const ForestConfig& cfg);

// Fully associative LRU cache of top-level MACs, held in the TCB.
class TopLevelMacCache {
 public:
  explicit TopLevelMacCache(unsigned entries) : entries_(entries) {}

  std::optional<Mac> lookup(std::uint64_t region);
  void insert(std::uint64_t region, Mac value);
  void clear() { entries_.assign(entries_.size(), Entry{}); }

  std::size_t capacity() const { return entries_.size(); }
  std::uint64_t hits() const { return hits_; }
  std::uint64_t misses() const { return misses_; }

 private:
  struct Entry {
    bool valid = false;
    std::uint64_t region = 0;
    Mac value;
    std::uint64_t stamp = 0;
  };
  std::vector<Entry> entries_;
  std::uint64_t clock_ = 0;
  std::uint64_t hits_ = 0;
  std::uint64_t misses_ = 0;
};

// Top-level MACs packed 8 per block into pages of a protected EPC store.
class TopLevelStore {
 public:
  explicit TopLevelStore(ProtectedEpc& epc) : epc_(&epc) {}

  static std::uint64_t pages_for(std::uint64_t top_count) {
    return (top_count * 8 + kPageSize - 1) / kPageSize;
  }

  Mac read(std::uint64_t index);
  void write(std::uint64_t index, Mac value);
  Mac peek(std::uint64_t index) const;
  ProtectedEpc& epc() { return *epc_; }

 private:
  ProtectedEpc* epc_;
};

struct ForestUpdate {
  PageNum page;
  Mac mac;
};

// q-level forest over page MACs. Levels below the top live in ForestStorage;
// the top level lives in the EPC. A region whose top MAC reads as zero has
// never been touched and is built on its first update.
class MacForest {
 public:
  MacForest(EmulatedDram& dram, const ForestConfig& cfg, const Ssk& ssk, TopLevelStore& top);

  struct VerifyResult {
    bool verified = false;
    unsigned dram_accesses = 0;
    bool cache_hit = false;
  };
  VerifyResult verify_page(PageNum page, const PageKey& key, std::span<const std::uint8_t, kPageSize> bytes);
  VerifyResult verify_leaf(PageNum page, Mac leaf) { return verify_leaves({{page, leaf}}); }
  // Pages of one region verified together: shared groups and the top are read once.
  VerifyResult verify_leaves(const std::vector<ForestUpdate>& leaves);

  // Returns forest DRAM accesses. A peer outside the region is applied as a separate update.
  unsigned update_on_evict(PageNum page, Mac new_mac, std::optional<ForestUpdate> club_with = std::nullopt);

  // MAC of the all-zero page under the all-zero key.
  Mac null_leaf() const { return null_leaf_; }
  std::uint64_t region_of(PageNum page) const { return page.value / geo_.region_pages; }
  // Uncounted read of a stored MAC (top level included).
  Mac stored(unsigned level, std::uint64_t index) const;
  PhysAddr node_addr(unsigned level, std::uint64_t index) const;

  const ForestGeometry& geometry() const { return geo_; }
  const ForestConfig& config() const { return cfg_; }
  const Ssk& ssk() const { return ssk_; }
  TopLevelMacCache& top_cache() { return cache_; }
  const TopLevelMacCache& top_cache() const { return cache_; }

  struct Stats {
    std::uint64_t verifications = 0;
    std::uint64_t updates = 0;
    std::uint64_t clubbed_updates = 0;
    std::uint64_t region_inits = 0;
    std::uint64_t verify_accesses = 0;
    std::uint64_t max_verify_accesses = 0;
    std::uint64_t update_accesses = 0;
  };
  const Stats& stats() const { return stats_; }

 private:
  Mac read_top(std::uint64_t region, bool& hit);
  void write_top(std::uint64_t region, Mac value);
  std::vector<Mac> read_group(unsigned level, std::uint64_t group);
  void write_node(unsigned level, std::uint64_t index, Mac value);
  Mac parent_of(unsigned level, std::uint64_t group, const std::vector<Mac>& children) const;
  void init_region(std::uint64_t region);
  void apply(const std::vector<ForestUpdate>& updates);
  [[noreturn]] void fail(PageNum page, const std::string& what) const;

  EmulatedDram* dram_;
  ForestConfig cfg_;
  ForestGeometry geo_;
  Ssk ssk_;
  TopLevelStore* top_;
  TopLevelMacCache cache_;
  PhysAddr base_;
  Mac null_leaf_;
  Stats stats_;
};

}  // namespace secscale
