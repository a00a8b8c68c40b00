#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "secscale/address_space.hpp"
#include "secscale/crypto_engine.hpp"

namespace secscale {

struct MerkleTreeConfig {
  // Children per node, bottom-up. The last arity repeats if more levels are needed.
  std::vector<unsigned> arities{32, 32, 32};
  std::uint64_t counter_cache_bytes = 32 * 1024;
};

// Shape of a counter tree over `pages` leaves. Only stored levels are listed;
// the root sits above the last one and is held in the TCB.
struct MerkleGeometry {
  std::vector<std::uint64_t> level_nodes;
  std::vector<unsigned> level_arity;  // children per node at each stored level (leaves: 64 blocks)
  std::vector<std::uint64_t> level_offset;
  std::uint64_t root_children = 0;

  static MerkleGeometry build(std::uint64_t pages, const MerkleTreeConfig& cfg);
  unsigned depth() const { return static_cast<unsigned>(level_nodes.size()); }
  std::uint64_t stored_nodes() const;
  std::uint64_t stored_bytes() const { return stored_nodes() * 64; }
  // Arity of the parent of a node at `level` (root for the last stored level).
  std::uint64_t parent_arity(unsigned level) const;
};

// Bytes of counter-tree nodes for `protected_size` bytes, one leaf per 4 KiB
// page, root excluded.
std::uint64_t merkle_storage_bytes(std::uint64_t protected_size, const MerkleTreeConfig& cfg);

// Minor-counter width for a node with `arity` children: 56 bytes of counter
// area hold a 64-bit major plus arity minors.
unsigned minor_bits_for(unsigned arity);

// 64-byte tree node: major(8) | packed minors(48) | mac(8).
struct MerkleNode {
  std::array<std::uint8_t, 64> bytes{};

  std::uint64_t major() const;
  void set_major(std::uint64_t v);
  std::uint64_t minor(unsigned i, unsigned bits) const;
  void set_minor(unsigned i, unsigned bits, std::uint64_t v);
  Mac mac() const;
  void set_mac(Mac m);
  std::span<const std::uint8_t> counter_area() const { return {bytes.data(), 56}; }
  // Effective counter of child `slot`.
  std::uint64_t child_counter(unsigned slot, unsigned bits) const {
    return (major() << bits) + minor(slot, bits);
  }
  bool operator==(const MerkleNode&) const = default;
};

// Direct-mapped, write-through cache of verified tree nodes (TCB resident).
class CounterCache {
 public:
  explicit CounterCache(std::uint64_t bytes);

  const MerkleNode* lookup(PhysAddr addr);
  void insert(PhysAddr addr, const MerkleNode& node);
  void clear();

  std::uint64_t lines() const { return lines_.size(); }
  std::uint64_t hits() const { return hits_; }
  std::uint64_t misses() const { return misses_; }

 private:
  struct Line {
    bool valid = false;
    std::uint64_t addr = 0;
    MerkleNode node;
  };
  std::vector<Line> lines_;
  std::uint64_t hits_ = 0;
  std::uint64_t misses_ = 0;
};

// Carter-Wegman counter tree: each node's MAC binds its counters to the
// counter its parent holds for it, pinning everything to the on-chip root.
class MerkleTree {
 public:
  MerkleTree(EmulatedDram& dram, PhysAddr node_base, std::uint64_t pages, const MerkleTreeConfig& cfg,
             const Key256& mac_key);

  // Zero counters with valid MACs everywhere; uncounted.
  void initialize();

  struct ReadResult {
    std::uint64_t counter = 0;
    bool verified = false;
    unsigned dram_accesses = 0;
  };
  ReadResult read_verify(std::uint64_t page, unsigned block);

  struct WriteResult {
    std::uint64_t counter = 0;
    unsigned dram_accesses = 0;
    bool page_rekeyed = false;
    std::array<std::uint64_t, kBlocksPerPage> old_counters{};
    std::array<std::uint64_t, kBlocksPerPage> new_counters{};
  };
  WriteResult write_update(std::uint64_t page, unsigned block);

  const MerkleGeometry& geometry() const { return geo_; }
  std::uint64_t pages() const { return pages_; }
  PhysAddr node_addr(unsigned level, std::uint64_t index) const;
  std::uint64_t root_counter(std::uint64_t slot) const { return root_.at(slot); }
  Mac node_mac(unsigned level, std::uint64_t index, const MerkleNode& node, std::uint64_t counter) const;
  // Counter a stored node is authenticated under, read from its parent.
  std::uint64_t counter_for(unsigned level, std::uint64_t index, const MerkleNode* parent) const;
  static std::uint64_t block_counter(const MerkleNode& leaf, unsigned block);

  CounterCache& cache() { return cache_; }
  const CounterCache& cache() const { return cache_; }

 private:
  std::uint64_t index_at(std::uint64_t page, unsigned level) const;
  MerkleNode fetch(unsigned level, std::uint64_t index, bool& from_dram, unsigned& accesses);
  void verify(unsigned level, std::uint64_t index, const MerkleNode& node, std::uint64_t counter) const;
  void store(unsigned level, std::uint64_t index, const MerkleNode& node, unsigned& accesses);

  EmulatedDram* dram_;
  PhysAddr base_;
  std::uint64_t pages_;
  MerkleGeometry geo_;
  Key256 mac_key_;
  std::vector<std::uint64_t> root_;
  CounterCache cache_;
};

// EPC page store: counter-mode encrypted blocks, per-block MACs keyed by the
// block counter, and a counter tree over all pages.
// Region layout: [tree nodes][block MACs][pages].
class ProtectedEpc {
 public:
  struct Keys {
    Key256 data_key{};
    Key256 mac_key{};
  };

  ProtectedEpc(EmulatedDram& dram, PhysAddr base, std::uint64_t pages, const MerkleTreeConfig& cfg,
               const Keys& keys);

  static std::uint64_t metadata_bytes(std::uint64_t pages, const MerkleTreeConfig& cfg);
  static std::uint64_t region_bytes(std::uint64_t pages, const MerkleTreeConfig& cfg) {
    return metadata_bytes(pages, cfg) + pages * kPageSize;
  }

  void initialize();

  struct ReadResult {
    Block data{};
    unsigned tree_accesses = 0;
  };
  ReadResult read_block(std::uint64_t page, unsigned block, Cause cause = Cause::Data);
  // Returns counter-tree DRAM accesses.
  unsigned write_block(std::uint64_t page, unsigned block, const Block& plaintext, Cause cause = Cause::Data);

  // Uncounted decryption under the current stored counter, without verification.
  Block peek_block(std::uint64_t page, unsigned block) const;
  // Uncounted check that every block MAC matches its stored counter.
  bool blocks_consistent() const;

  PhysAddr data_addr(std::uint64_t page, unsigned block) const;
  PhysAddr mac_addr(std::uint64_t page, unsigned block) const;
  PageNum phys_page(std::uint64_t page) const { return data_addr(page, 0).page(); }
  std::uint64_t pages() const { return pages_; }
  MerkleTree& tree() { return tree_; }
  const MerkleTree& tree() const { return tree_; }
  Mac block_mac(std::uint64_t page, unsigned block, std::uint64_t counter, const Block& ciphertext) const;

  // Called after every successful block write; used by reference models in tests.
  void set_write_observer(std::function<void(std::uint64_t page, unsigned block)> f) { observer_ = std::move(f); }

 private:
  std::uint64_t stored_counter(std::uint64_t page, unsigned block) const;

  EmulatedDram* dram_;
  PhysAddr base_;
  std::uint64_t pages_;
  Keys keys_;
  MerkleTree tree_;
  PhysAddr mac_base_;
  PhysAddr data_base_;
  std::function<void(std::uint64_t, unsigned)> observer_;
};

}  // namespace secscale
