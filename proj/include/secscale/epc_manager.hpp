#pragma once

#include <array>
#include <bitset>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <unordered_map>
#include <vector>

#include "secscale/address_space.hpp"
#include "secscale/crypto_engine.hpp"
#include "secscale/epc_merkle.hpp"
#include "secscale/mac_forest.hpp"
#include "secscale/mvc.hpp"
#include "secscale/timing_model.hpp"

namespace secscale {

enum class AccessKind : std::uint8_t { Read, Write };

// Virtual pages at or above this index form the shared, unprotected scratch window.
inline constexpr std::uint64_t kScratchVpageBase = std::uint64_t{1} << 24;

struct SecretKeys {
  std::uint64_t hw_key = 0;
  Ssk ssk;
  ProtectedEpc::Keys epc;

  static SecretKeys from_seed(std::uint64_t seed);
};

// OS-managed enclave page table. The adversary may rewrite entries.
class PageTable {
 public:
  void map(EnclaveId enclave, std::uint64_t vpage, PageNum phys) { entries_[{enclave, vpage}] = phys; }
  std::optional<PageNum> lookup(EnclaveId enclave, std::uint64_t vpage) const;
  void unmap(EnclaveId enclave, std::uint64_t vpage) { entries_.erase({enclave, vpage}); }

 private:
  std::map<std::pair<EnclaveId, std::uint64_t>, PageNum> entries_;
};

struct EpcSlot {
  bool valid = false;
  bool reserved = false;  // held by an eviction-only entry
  bool used = false;      // ever held a page; pre-loading needs a zero slot
  EnclaveId owner = 0;
  std::uint64_t vpage = 0;
  PageNum phys;
  std::uint64_t lru = 0;
};

struct EshrEntry {
  bool v_bit = false;
  bool e_bit = false;
  bool has_load = false;
  std::uint64_t slot = 0;
  std::bitset<kBlocksPerPage> ls_vector;

  PageNum epage;
  PageKey evict_key;
  PageBytes evict_plain{};

  PageNum lpage;
  PageKey load_key;
  bool load_fresh = false;
  PageBytes load_plain{};
  std::bitset<kBlocksPerPage> fetched;  // ciphertext already read on the critical path
  std::array<Block, kBlocksPerPage> fetched_cipher{};
  std::bitset<kBlocksPerPage> pending_write;
  std::array<Block, kBlocksPerPage> pending_data{};

  std::optional<unsigned> priority_block;
  std::uint64_t seq = 0;
  Cycle ready_at = 0;
};

class EshrTable {
 public:
  explicit EshrTable(std::size_t entries) : entries_(entries) {}

  std::optional<std::size_t> allocate();
  EshrEntry& at(std::size_t i) { return entries_.at(i); }
  const EshrEntry& at(std::size_t i) const { return entries_.at(i); }
  std::size_t capacity() const { return entries_.size(); }
  std::size_t live() const;
  std::optional<std::size_t> find_load(PageNum page) const;
  std::optional<std::size_t> find_evict(PageNum page) const;
  std::optional<std::size_t> oldest() const;

 private:
  std::vector<EshrEntry> entries_;
};

// Next LRU victim, recomputed off the critical path after each fault.
struct EvictRegister {
  bool valid = false;
  std::uint64_t slot = 0;
};

struct SecScaleConfig {
  // 0: as many data pages as fit in the EPC next to the forest top level.
  std::uint64_t epc_data_pages = 0;
  MerkleTreeConfig merkle;
  ForestConfig forest;
  std::size_t eshr_entries = 32;
  bool clubbing = true;
  MvcConfig mvc;
  KeySource key_source = KeySource::Prng;
};

enum class Outcome : std::uint8_t { EpcHit, FaultStarted, DemandFetch, QueuedWrite, ScratchAccess };
std::string_view to_string(Outcome o);

struct AccessResult {
  Outcome outcome = Outcome::EpcHit;
  Block data{};
  std::optional<std::size_t> eshr_index;
  // DRAM reads issued before execution resumed.
  unsigned critical_reads = 0;
};

struct EpcManagerStats {
  std::uint64_t hits = 0;
  std::uint64_t faults = 0;
  std::uint64_t read_faults = 0;
  std::uint64_t evictions = 0;
  std::uint64_t demand_fetches = 0;
  std::uint64_t queued_writes = 0;
  std::uint64_t scratch_accesses = 0;
  std::uint64_t eshr_full_stalls = 0;
  std::uint64_t forced_drains = 0;
  std::uint64_t steps = 0;
  std::uint64_t clubbed_updates = 0;
  std::uint64_t forest_updates = 0;
  std::uint64_t barriers = 0;
  Cycle barrier_stall = 0;
  std::uint64_t min_read_fault_critical_reads = ~std::uint64_t{0};
  std::uint64_t max_read_fault_critical_reads = 0;
  std::uint64_t max_live_entries = 0;
};

// The EPC as a page cache over the eEPC with overlapped fault handling.
class EpcManager {
 public:
  EpcManager(EmulatedDram& dram, TimingModel& timing, const SecScaleConfig& cfg, const SecretKeys& keys);

  // Bytes of EPC needed for `data_pages` slots plus the forest top level.
  static std::uint64_t epc_bytes_needed(std::uint64_t data_pages, std::uint64_t total_size,
                                        const SecScaleConfig& cfg);

  // Grants `vpages` contiguous eEPC pages and pre-loads them into free slots.
  void register_enclave(EnclaveId enclave, std::uint64_t vpages);

  AccessResult access(EnclaveId enclave, std::uint64_t vaddr, AccessKind kind, const Block* data = nullptr);
  // Runs one transfer step for the highest-priority live entry; false if idle.
  bool fault_step();
  std::uint64_t evict_select();
  std::uint64_t lru_victim() const;
  Cycle syscall_barrier();
  AccessResult scratch_access(EnclaveId enclave, PageNum page, std::uint64_t offset, AccessKind kind,
                              const Block* data);
  // OS-initiated eviction of a resident page.
  void flush_page(EnclaveId enclave, std::uint64_t vpage);
  // Barrier plus flushing the deferred forest update.
  void quiesce();
  // Runs background work whose lane time precedes the critical path.
  void advance();

  // Logical plaintext of an enclave block without DRAM accounting or checks.
  Block peek(EnclaveId enclave, std::uint64_t vaddr) const;

  PageTable& page_table() { return page_table_; }
  EshrTable& eshr() { return eshr_; }
  const EpcSlot& slot(std::uint64_t i) const { return slots_.at(i); }
  std::uint64_t slots() const { return slots_.size(); }
  std::optional<std::uint64_t> resident_slot(PageNum page) const;
  const EvictRegister& evict_register() const { return evict_reg_; }
  ProtectedEpc& data_epc() { return *data_epc_; }
  ProtectedEpc& top_epc() { return *top_epc_; }
  MacForest& forest() { return *forest_; }
  Mvc& mvc() { return *mvc_; }
  const SecretKeys& keys() const { return keys_; }
  const EpcManagerStats& stats() const { return stats_; }
  std::optional<EnclaveId> owner_of(PageNum page) const;
  std::pair<std::uint64_t, std::uint64_t> enclave_range(EnclaveId enclave) const;
  // Page key used for `page` given its stored slot; nullopt for a fresh page.
  std::optional<PageKey> stored_key(PageNum page, EnclaveId owner) const;

 private:
  PageNum translate(EnclaveId enclave, std::uint64_t vpage) const;
  void touch(std::uint64_t slot);
  void refresh_evict_register();
  std::size_t start_entry();
  void run_step(std::size_t idx, unsigned block);
  void complete(std::size_t idx);
  void drain_entry(std::size_t idx);
  void forest_update(ForestUpdate u, Cycle ready);
  void flush_pending_update(std::optional<std::uint64_t> region = std::nullopt);
  std::optional<std::size_t> next_entry() const;
  std::optional<unsigned> next_block(const EshrEntry& e) const;
  Random128 read_key_slot(PageNum page, bool critical, bool& fresh);

  EmulatedDram* dram_;
  TimingModel* timing_;
  SecScaleConfig cfg_;
  SecretKeys keys_;
  Prng prng_;
  std::unique_ptr<ProtectedEpc> data_epc_;
  std::unique_ptr<ProtectedEpc> top_epc_;
  std::unique_ptr<TopLevelStore> top_store_;
  std::unique_ptr<MacForest> forest_;
  std::unique_ptr<Mvc> mvc_;
  EshrTable eshr_;
  PageTable page_table_;
  std::vector<EpcSlot> slots_;
  std::unordered_map<std::uint64_t, std::uint64_t> inverted_;  // phys page -> slot
  std::map<EnclaveId, std::pair<std::uint64_t, std::uint64_t>> enclaves_;  // first eEPC index, pages
  std::uint64_t next_eepc_index_ = 0;
  EvictRegister evict_reg_;
  std::optional<ForestUpdate> pending_update_;
  std::uint64_t lru_clock_ = 0;
  std::uint64_t seq_ = 0;
  EpcManagerStats stats_;
};

}  // namespace secscale
