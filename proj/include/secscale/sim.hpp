#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "secscale/address_space.hpp"
#include "secscale/epc_manager.hpp"
#include "secscale/timing_model.hpp"
#include "secscale/workload.hpp"

namespace secscale {

enum class ModelKind : std::uint8_t { Baseline, SgxClient, Dfp, PenglaiMmt, SecScale };
std::string_view to_string(ModelKind m);
ModelKind parse_model(std::string_view name);

struct DfpConfig {
  // Probability that a prediction is replaced by the true next faulting page.
  double accuracy = 0.1;
  // How far ahead the accuracy oracle looks for the next fault.
  std::size_t lookahead = 256;
};

struct PenglaiConfig {
  unsigned root_cache_entries = 32;
  std::uint64_t subtree_pages = 64;
  // Tree levels walked from a missing subtree root to the leaf counter.
  unsigned walk_levels = 2;
};

struct SimConfig {
  ModelKind model = ModelKind::SecScale;
  LayoutConfig layout{64ull << 20, 0, 1ull << 20, 16, 0};
  LatencyConfig latency;
  SecScaleConfig secscale;
  DfpConfig dfp;
  PenglaiConfig penglai;
  CacheConfig cache;
  // False charges no time for integrity-tree traffic in the SGX, DFP and
  // Penglai models, isolating their fault overheads.
  bool integrity_tree_costs = true;
  // Seeds the secret keys and every model-internal random choice.
  std::uint64_t seed = 1;

  void validate() const;
  // Layout with the forest storage sized for `secscale.forest`.
  LayoutConfig resolved_layout() const;
};

struct SecurityEventRecord {
  SecurityEventKind kind{};
  std::uint64_t page = 0;
  std::string detail;
  std::uint64_t speculative_instructions = 0;
  std::uint64_t event_index = 0;
};

struct Report {
  std::string model;
  std::uint64_t seed = 0;
  Cycle total_cycles = 0;
  Cycle critical_cycles = 0;
  Cycle stall_cycles = 0;
  std::array<Cycle, kLaneCount> lane_busy{};
  std::uint64_t instructions = 0;
  double performance = 0;  // instructions per cycle
  std::array<std::uint64_t, kCauseCount> dram_by_cause{};
  std::array<std::uint64_t, kRegionCount> dram_reads{};
  std::array<std::uint64_t, kRegionCount> dram_writes{};
  CacheStats cache;
  std::uint64_t epc_faults = 0;
  std::uint64_t evictions = 0;
  double evictions_per_1k_instructions = 0;
  double epc_miss_pct = 0;
  std::uint64_t forest_updates = 0;
  std::uint64_t clubbed_updates = 0;
  double clubbing_frequency = 0;
  std::uint64_t top_cache_hits = 0;
  std::uint64_t top_cache_misses = 0;
  double top_cache_hit_rate = 0;
  std::uint64_t verifications = 0;
  std::uint64_t max_forest_accesses_per_verification = 0;
  std::uint64_t min_read_fault_critical_reads = 0;
  std::uint64_t max_read_fault_critical_reads = 0;
  std::uint64_t read_faults = 0;
  std::uint64_t demand_fetches = 0;
  std::uint64_t prefetches = 0;
  std::uint64_t useful_prefetches = 0;
  std::uint64_t root_cache_hits = 0;
  std::uint64_t root_cache_misses = 0;
  std::uint64_t barriers = 0;
  std::uint64_t fill_mismatches = 0;
  std::optional<SecurityEventRecord> security_event;

  // Ratio identities over the counters above.
  void finalize();
};

// A protected memory as seen by the LLC.
class MemorySystem {
 public:
  explicit MemorySystem(const SimConfig& cfg);
  virtual ~MemorySystem() = default;
  MemorySystem(const MemorySystem&) = delete;
  MemorySystem& operator=(const MemorySystem&) = delete;

  virtual void register_enclave(EnclaveId enclave, std::uint64_t vpages) = 0;
  virtual Block read(EnclaveId enclave, std::uint64_t vaddr) = 0;
  virtual void write(EnclaveId enclave, std::uint64_t vaddr, const Block& data) = 0;
  virtual void syscall(EnclaveId /*enclave*/) {}
  // Completes all background work.
  virtual void finish() { timing_.drain(); }
  virtual Block peek_plain(EnclaveId enclave, std::uint64_t vaddr) const = 0;
  virtual void fill_report(Report& r) const;
  // Remaining trace, for models with an oracle component.
  virtual void set_future(const std::vector<MemEvent>* /*events*/, std::size_t /*next*/) {}

  EmulatedDram& dram() { return dram_; }
  const EmulatedDram& dram() const { return dram_; }
  TimingModel& timing() { return timing_; }
  const MemoryLayout& layout() const { return layout_; }
  const SimConfig& config() const { return cfg_; }

 protected:
  SimConfig cfg_;
  MemoryLayout layout_;
  EmulatedDram dram_;
  TimingModel timing_;
};

std::unique_ptr<MemorySystem> make_model(const SimConfig& cfg);

// Contiguous eEPC allocation shared by the models without an EPC page cache.
class FlatAllocator {
 public:
  void add(const MemoryLayout& layout, EnclaveId enclave, std::uint64_t vpages);
  PageNum translate(EnclaveId enclave, std::uint64_t vpage) const;

 private:
  std::uint64_t next_ = 0;
  std::map<EnclaveId, std::pair<std::uint64_t, std::uint64_t>> ranges_;
  const MemoryLayout* layout_ = nullptr;
};

class BaselineModel : public MemorySystem {
 public:
  explicit BaselineModel(const SimConfig& cfg) : MemorySystem(cfg) {}
  void register_enclave(EnclaveId enclave, std::uint64_t vpages) override;
  Block read(EnclaveId enclave, std::uint64_t vaddr) override;
  void write(EnclaveId enclave, std::uint64_t vaddr, const Block& data) override;
  Block peek_plain(EnclaveId enclave, std::uint64_t vaddr) const override;

 private:
  FlatAllocator alloc_;
};

// Client SGX: a Merkle-protected EPC and a fixed fault penalty per miss.
// Evicted pages are stored encrypted under a per-run key.
class SgxClientModel : public MemorySystem {
 public:
  explicit SgxClientModel(const SimConfig& cfg);
  void register_enclave(EnclaveId enclave, std::uint64_t vpages) override;
  Block read(EnclaveId enclave, std::uint64_t vaddr) override;
  void write(EnclaveId enclave, std::uint64_t vaddr, const Block& data) override;
  Block peek_plain(EnclaveId enclave, std::uint64_t vaddr) const override;
  void fill_report(Report& r) const override;

  ProtectedEpc& epc() { return *epc_; }
  std::optional<std::uint64_t> resident_slot(PageNum page) const;
  PageNum translate(EnclaveId enclave, std::uint64_t vpage) const { return alloc_.translate(enclave, vpage); }

 protected:
  struct Slot {
    bool valid = false;
    EnclaveId owner = 0;
    std::uint64_t vpage = 0;
    PageNum phys;
    std::uint64_t lru = 0;
  };
  // Makes `page` resident, returning its slot. Charges the fault when `critical`.
  std::uint64_t ensure_resident(EnclaveId enclave, std::uint64_t vpage, bool critical);
  // DRAM accesses the timing model charges for.
  std::uint64_t charged_accesses() const;
  bool is_resident(PageNum page) const { return inverted_.count(page.value) != 0; }

  FlatAllocator alloc_;
  std::unique_ptr<ProtectedEpc> epc_;
  PageKey backing_key_;
  std::vector<Slot> slots_;
  std::unordered_map<std::uint64_t, std::uint64_t> inverted_;
  std::unordered_map<std::uint64_t, bool> written_back_;  // page ever evicted
  std::uint64_t lru_clock_ = 0;
  std::uint64_t faults_ = 0;
  std::uint64_t evictions_ = 0;
};

// Dynamic fault prediction: SGX plus a background page prefetcher.
class DfpModel : public SgxClientModel {
 public:
  explicit DfpModel(const SimConfig& cfg);
  Block read(EnclaveId enclave, std::uint64_t vaddr) override;
  void write(EnclaveId enclave, std::uint64_t vaddr, const Block& data) override;
  void set_future(const std::vector<MemEvent>* events, std::size_t next) override;
  void fill_report(Report& r) const override;

  // Next page to prefetch after a fault on `vpage`, if any.
  std::optional<std::uint64_t> predict(EnclaveId enclave, std::uint64_t vpage);

 private:
  void on_access(EnclaveId enclave, std::uint64_t vpage, bool faulted);

  std::mt19937_64 rng_;
  std::map<std::pair<EnclaveId, std::uint64_t>, std::uint64_t> successor_;
  std::optional<std::pair<EnclaveId, std::uint64_t>> last_fault_;
  std::unordered_map<std::uint64_t, bool> prefetched_;  // phys page -> not yet used
  const std::vector<MemEvent>* future_ = nullptr;
  std::size_t next_ = 0;
  std::uint64_t prefetches_ = 0;
  std::uint64_t useful_ = 0;
};

// Penglai's mountable Merkle tree as a cost model: no EPC, every miss checks a
// leaf counter, and subtree roots are cached in a small LRU.
class PenglaiModel : public MemorySystem {
 public:
  explicit PenglaiModel(const SimConfig& cfg);
  void register_enclave(EnclaveId enclave, std::uint64_t vpages) override;
  Block read(EnclaveId enclave, std::uint64_t vaddr) override;
  void write(EnclaveId enclave, std::uint64_t vaddr, const Block& data) override;
  Block peek_plain(EnclaveId enclave, std::uint64_t vaddr) const override;
  void fill_report(Report& r) const override;

 private:
  void check_counters(PageNum page);

  FlatAllocator alloc_;
  CounterCache counters_;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> roots_;  // subtree, last use
  std::uint64_t clock_ = 0;
  std::uint64_t root_hits_ = 0;
  std::uint64_t root_misses_ = 0;
  std::uint64_t mmt_accesses_ = 0;  // counter-tree DRAM traffic, modelled rather than stored
};

class SecScaleModel : public MemorySystem {
 public:
  explicit SecScaleModel(const SimConfig& cfg);
  void register_enclave(EnclaveId enclave, std::uint64_t vpages) override;
  Block read(EnclaveId enclave, std::uint64_t vaddr) override;
  void write(EnclaveId enclave, std::uint64_t vaddr, const Block& data) override;
  void syscall(EnclaveId enclave) override;
  void finish() override;
  Block peek_plain(EnclaveId enclave, std::uint64_t vaddr) const override;
  void fill_report(Report& r) const override;

  EpcManager& manager() { return *mgr_; }

 private:
  std::unique_ptr<EpcManager> mgr_;
};

// Called before event `index` is applied; lets the adversary act between steps.
using StepHook = std::function<void(std::size_t index, MemorySystem& model)>;

struct RunOptions {
  StepHook before_event;
  // Compare fills against the expected memory image.
  bool check_fills = true;
  // Pages per enclave; empty means enclave_footprints(trace).
  std::map<EnclaveId, std::uint64_t> footprints;
};

// Pages each enclave needs: one past the highest page touched.
std::map<EnclaveId, std::uint64_t> enclave_footprints(const std::vector<MemEvent>& events);

Report run_events(MemorySystem& model, const FilteredTrace& trace, const RunOptions& opts = {});
Report run(const SimConfig& cfg, const FilteredTrace& trace, const RunOptions& opts = {});
Report run(const SimConfig& cfg, const std::vector<TraceRecord>& records);

struct ComparisonRow {
  std::string label;
  Report report;
  double normalized_performance = 0;  // against BaselineUnsecure on the same trace
};

// Each config runs on the same trace; a Baseline run provides the normalization.
std::vector<ComparisonRow> compare(const std::vector<std::pair<std::string, SimConfig>>& configs,
                                   const FilteredTrace& trace);

struct StorageBreakdown {
  std::uint64_t total_size = 0;
  std::uint64_t forest_bytes = 0;  // every level
  std::uint64_t forest_top_macs = 0;
  std::uint64_t forest_top_bytes = 0;  // held in the EPC
  std::uint64_t merkle_bytes = 0;      // counter tree over the EPC
  std::uint64_t key_table_bytes = 0;
  std::uint64_t combined_bytes = 0;  // forest + Merkle
};

StorageBreakdown storage_breakdown(std::uint64_t total_size, std::uint64_t epc_size, const ForestConfig& forest,
                                   const MerkleTreeConfig& merkle);

void write_report_json(std::ostream& out, const Report& r);
std::string report_csv_header();
std::string report_csv_row(const Report& r);
void write_comparison_csv(std::ostream& out, const std::vector<ComparisonRow>& rows);

}  // namespace secscale
