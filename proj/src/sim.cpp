#include "secscale/sim.hpp"

#include <algorithm>
#include <cstring>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "secscale/kernels.hpp"

namespace secscale {

namespace {

unsigned block_of(std::uint64_t vaddr) { return static_cast<unsigned>((vaddr % kPageSize) / kBlockSize); }

std::uint64_t max_protected_pages(std::uint64_t bytes, const MerkleTreeConfig& cfg) {
  std::uint64_t lo = 0;
  std::uint64_t hi = bytes / kPageSize;
  while (lo < hi) {
    const std::uint64_t mid = (lo + hi + 1) / 2;
    if (ProtectedEpc::region_bytes(mid, cfg) <= bytes)
      lo = mid;
    else
      hi = mid - 1;
  }
  return lo;
}

double ratio(double num, double den) { return den > 0 ? num / den : 0.0; }

}  // namespace

std::string_view to_string(ModelKind m) {
  switch (m) {
    case ModelKind::Baseline: return "baseline";
    case ModelKind::SgxClient: return "sgx-client";
    case ModelKind::Dfp: return "dfp";
    case ModelKind::PenglaiMmt: return "penglai-mmt";
    case ModelKind::SecScale: return "secscale";
  }
  return "?";
}

ModelKind parse_model(std::string_view name) {
  for (auto m : {ModelKind::Baseline, ModelKind::SgxClient, ModelKind::Dfp, ModelKind::PenglaiMmt, ModelKind::SecScale})
    if (to_string(m) == name) return m;
  throw ConfigError("model", "unknown model `" + std::string(name) + "`");
}

void SimConfig::validate() const {
  latency.validate();
  secscale.forest.validate();
  const std::uint64_t region = secscale.forest.region_pages() * kPageSize;
  if (layout.total_size == 0 || layout.total_size > kMaxPhysSize)
    throw ConfigError("layout.total_size", "must be in (0, 512 GiB]");
  if (layout.total_size % region)
    throw ConfigError("layout.total_size", "must be a multiple of the subtree region (" + std::to_string(region) + " bytes)");
  if (layout.epc_size == 0 || layout.epc_size % kPageSize) throw ConfigError("layout.epc_size", "must be a positive multiple of 4096");
  if (layout.epc_base % kPageSize) throw ConfigError("layout.epc_base", "must be page aligned");
  if (dfp.accuracy < 0.0 || dfp.accuracy > 1.0) throw ConfigError("dfp.accuracy", "must be in [0, 1]");
  if (penglai.root_cache_entries == 0) throw ConfigError("penglai.root_cache_entries", "must be >= 1");
  if (penglai.subtree_pages == 0) throw ConfigError("penglai.subtree_pages", "must be >= 1");
  if (secscale.eshr_entries == 0) throw ConfigError("secscale.eshr_entries", "must be >= 1");
}

LayoutConfig SimConfig::resolved_layout() const {
  LayoutConfig l = layout;
  l.forest_bytes = forest_lower_bytes(l.total_size, secscale.forest);
  return l;
}

void Report::finalize() {
  performance = ratio(static_cast<double>(instructions), static_cast<double>(total_cycles));
  evictions_per_1k_instructions = ratio(static_cast<double>(evictions), static_cast<double>(instructions) / 1000.0);
  epc_miss_pct = ratio(100.0 * static_cast<double>(epc_faults), static_cast<double>(cache.llc_misses));
  clubbing_frequency = ratio(static_cast<double>(clubbed_updates), static_cast<double>(forest_updates));
  top_cache_hit_rate =
      ratio(static_cast<double>(top_cache_hits), static_cast<double>(top_cache_hits + top_cache_misses));
}

MemorySystem::MemorySystem(const SimConfig& cfg)
    : cfg_(cfg), layout_(cfg.resolved_layout()), dram_(layout_), timing_(cfg.latency) {}

void MemorySystem::fill_report(Report& r) const {
  r.model = std::string(to_string(cfg_.model));
  r.seed = cfg_.seed;
  r.total_cycles = timing_.total_cycles();
  r.critical_cycles = timing_.stats().critical;
  r.stall_cycles = timing_.stats().stall;
  r.lane_busy = timing_.stats().lane_busy;
  r.instructions = timing_.instructions();
  for (std::size_t c = 0; c < kCauseCount; ++c) r.dram_by_cause[c] = dram_.accesses(static_cast<Cause>(c));
  for (std::size_t g = 0; g < kRegionCount; ++g) {
    r.dram_reads[g] = dram_.reads(static_cast<Region>(g));
    r.dram_writes[g] = dram_.writes(static_cast<Region>(g));
  }
}

void FlatAllocator::add(const MemoryLayout& layout, EnclaveId enclave, std::uint64_t vpages) {
  if (ranges_.count(enclave)) throw DomainError("enclave " + std::to_string(enclave) + " already registered");
  if (next_ + vpages > layout.eepc_pages()) throw LayoutError("eEPC exhausted registering enclave " + std::to_string(enclave));
  layout_ = &layout;
  ranges_[enclave] = {next_, vpages};
  next_ += vpages;
}

PageNum FlatAllocator::translate(EnclaveId enclave, std::uint64_t vpage) const {
  auto it = ranges_.find(enclave);
  if (it == ranges_.end() || vpage >= it->second.second)
    throw CatastrophicFailure(SecurityEventKind::MappingViolation, vpage,
                              "enclave " + std::to_string(enclave) + " has no mapping for this page");
  return layout_->eepc_page(it->second.first + vpage);
}

// ---- Baseline ----------------------------------------------------------------

void BaselineModel::register_enclave(EnclaveId enclave, std::uint64_t vpages) { alloc_.add(layout_, enclave, vpages); }

Block BaselineModel::read(EnclaveId enclave, std::uint64_t vaddr) {
  Block out;
  dram_.read(block_addr(alloc_.translate(enclave, vaddr / kPageSize), block_of(vaddr)), out, Cause::Data);
  timing_.charge(Event::DramAccess);
  return out;
}

void BaselineModel::write(EnclaveId enclave, std::uint64_t vaddr, const Block& data) {
  dram_.write(block_addr(alloc_.translate(enclave, vaddr / kPageSize), block_of(vaddr)), data, Cause::Data);
  timing_.charge(Event::DramAccess);
}

Block BaselineModel::peek_plain(EnclaveId enclave, std::uint64_t vaddr) const {
  Block out;
  dram_.peek(block_addr(alloc_.translate(enclave, vaddr / kPageSize), block_of(vaddr)), out);
  return out;
}

// ---- SGX client ----------------------------------------------------------------

SgxClientModel::SgxClientModel(const SimConfig& cfg) : MemorySystem(cfg) {
  const SecretKeys keys = SecretKeys::from_seed(cfg.seed);
  const std::uint64_t pages = max_protected_pages(layout_.epc_size(), cfg.secscale.merkle);
  if (pages == 0) throw LayoutError("EPC too small for a single protected page");
  epc_ = std::make_unique<ProtectedEpc>(dram_, PhysAddr{layout_.epc_base()}, pages, cfg.secscale.merkle, keys.epc);
  epc_->initialize();
  slots_.resize(pages);
  Random128 r{};
  const Digest256 d = sha256(keys.ssk.bytes());
  std::memcpy(r.data(), d.data(), r.size());
  backing_key_ = compose_page_key(keys.hw_key, 0, r, 0);
}

void SgxClientModel::register_enclave(EnclaveId enclave, std::uint64_t vpages) {
  alloc_.add(layout_, enclave, vpages);
  std::uint64_t s = 0;
  for (std::uint64_t v = 0; v < vpages; ++v) {
    while (s < slots_.size() && slots_[s].valid) ++s;
    if (s == slots_.size()) break;
    const PageNum p = translate(enclave, v);
    if (written_back_.count(p.value)) continue;
    slots_[s] = Slot{true, enclave, v, p, ++lru_clock_};
    inverted_[p.value] = s;
  }
}

std::optional<std::uint64_t> SgxClientModel::resident_slot(PageNum page) const {
  auto it = inverted_.find(page.value);
  if (it == inverted_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t SgxClientModel::ensure_resident(EnclaveId enclave, std::uint64_t vpage, bool critical) {
  const PageNum p = translate(enclave, vpage);
  if (auto s = resident_slot(p)) {
    slots_[*s].lru = ++lru_clock_;
    return *s;
  }
  const std::uint64_t before = charged_accesses();
  std::uint64_t s = slots_.size();
  for (std::uint64_t i = 0; i < slots_.size(); ++i) {
    if (!slots_[i].valid) {
      s = i;
      break;
    }
  }
  if (s == slots_.size()) {
    s = 0;
    for (std::uint64_t i = 1; i < slots_.size(); ++i)
      if (slots_[i].lru < slots_[s].lru) s = i;
    const PageNum victim = slots_[s].phys;
    PageKey key = backing_key_;
    key.page_addr = static_cast<std::uint32_t>(victim.value);
    for (unsigned b = 0; b < kBlocksPerPage; ++b) {
      const Block pt = epc_->read_block(s, b).data;
      dram_.write(block_addr(victim, b), ecb_encrypt_block(derive_block_key(key, b), pt), Cause::Data);
    }
    written_back_[victim.value] = true;
    inverted_.erase(victim.value);
    ++evictions_;
  }
  const bool stored = written_back_.count(p.value) != 0;
  PageKey key = backing_key_;
  key.page_addr = static_cast<std::uint32_t>(p.value);
  for (unsigned b = 0; b < kBlocksPerPage; ++b) {
    Block ct;
    dram_.read(block_addr(p, b), ct, Cause::Data);
    epc_->write_block(s, b, stored ? ecb_decrypt_block(derive_block_key(key, b), ct) : Block{});
  }
  slots_[s] = Slot{true, enclave, vpage, p, ++lru_clock_};
  inverted_[p.value] = s;
  ++faults_;
  const Cycle transfer = timing_.cost(Event::DramBurst, charged_accesses() - before);
  if (critical) {
    timing_.charge(Event::SgxFault);
    timing_.wait_until(timing_.now() + transfer);
  } else {
    timing_.charge_cycles(Lane::Prefetch, timing_.cost(Event::SgxFault) + transfer);
  }
  return s;
}

std::uint64_t SgxClientModel::charged_accesses() const {
  return cfg_.integrity_tree_costs ? dram_.total_accesses() : dram_.accesses(Cause::Data);
}

Block SgxClientModel::read(EnclaveId enclave, std::uint64_t vaddr) {
  const std::uint64_t s = ensure_resident(enclave, vaddr / kPageSize, true);
  const std::uint64_t before = charged_accesses();
  const Block out = epc_->read_block(s, block_of(vaddr)).data;
  timing_.charge(Event::DramAccess, charged_accesses() - before);
  timing_.charge(Event::CtrCrypt);
  return out;
}

void SgxClientModel::write(EnclaveId enclave, std::uint64_t vaddr, const Block& data) {
  const std::uint64_t s = ensure_resident(enclave, vaddr / kPageSize, true);
  const std::uint64_t before = charged_accesses();
  epc_->write_block(s, block_of(vaddr), data);
  timing_.charge(Event::DramAccess, charged_accesses() - before);
  timing_.charge(Event::CtrCrypt);
}

Block SgxClientModel::peek_plain(EnclaveId enclave, std::uint64_t vaddr) const {
  const PageNum p = translate(enclave, vaddr / kPageSize);
  if (auto s = resident_slot(p)) return epc_->peek_block(*s, block_of(vaddr));
  if (!written_back_.count(p.value)) return Block{};
  PageKey key = backing_key_;
  key.page_addr = static_cast<std::uint32_t>(p.value);
  Block ct;
  dram_.peek(block_addr(p, block_of(vaddr)), ct);
  return ecb_decrypt_block(derive_block_key(key, block_of(vaddr)), ct);
}

void SgxClientModel::fill_report(Report& r) const {
  MemorySystem::fill_report(r);
  r.epc_faults = faults_;
  r.read_faults = faults_;
  r.evictions = evictions_;
}

// ---- DFP -------------------------------------------------------------------------

DfpModel::DfpModel(const SimConfig& cfg) : SgxClientModel(cfg), rng_(cfg.seed ^ 0xdf9u) {}

void DfpModel::set_future(const std::vector<MemEvent>* events, std::size_t next) {
  future_ = events;
  next_ = next;
}

std::optional<std::uint64_t> DfpModel::predict(EnclaveId enclave, std::uint64_t vpage) {
  const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  if (u < cfg_.dfp.accuracy && future_) {
    const std::size_t end = std::min(future_->size(), next_ + cfg_.dfp.lookahead);
    for (std::size_t i = next_; i < end; ++i) {
      const MemEvent& e = (*future_)[i];
      if (e.kind == MemEvent::Kind::Syscall || e.enclave != enclave) continue;
      const std::uint64_t v = e.vaddr / kPageSize;
      if (v != vpage && !is_resident(translate(enclave, v))) return v;
    }
  }
  auto it = successor_.find({enclave, vpage});
  if (it != successor_.end()) return it->second;
  return std::nullopt;
}

void DfpModel::on_access(EnclaveId enclave, std::uint64_t vpage, bool faulted) {
  const PageNum p = translate(enclave, vpage);
  if (auto it = prefetched_.find(p.value); it != prefetched_.end()) {
    if (!faulted) ++useful_;
    prefetched_.erase(it);
  }
  if (!faulted) return;
  if (last_fault_) successor_[*last_fault_] = vpage;
  last_fault_ = {enclave, vpage};
  const auto next = predict(enclave, vpage);
  if (!next || timing_.lane_free(Lane::Prefetch) > timing_.now()) return;
  const PageNum np = translate(enclave, *next);
  if (is_resident(np)) return;
  ensure_resident(enclave, *next, false);
  --faults_;  // a prefetch is not a fault
  ++prefetches_;
  prefetched_[np.value] = true;
}

Block DfpModel::read(EnclaveId enclave, std::uint64_t vaddr) {
  const std::uint64_t vpage = vaddr / kPageSize;
  const bool faulted = !is_resident(translate(enclave, vpage));
  const Block out = SgxClientModel::read(enclave, vaddr);
  on_access(enclave, vpage, faulted);
  return out;
}

void DfpModel::write(EnclaveId enclave, std::uint64_t vaddr, const Block& data) {
  const std::uint64_t vpage = vaddr / kPageSize;
  const bool faulted = !is_resident(translate(enclave, vpage));
  SgxClientModel::write(enclave, vaddr, data);
  on_access(enclave, vpage, faulted);
}

void DfpModel::fill_report(Report& r) const {
  SgxClientModel::fill_report(r);
  r.prefetches = prefetches_;
  r.useful_prefetches = useful_;
}

// ---- Penglai MMT -----------------------------------------------------------------

PenglaiModel::PenglaiModel(const SimConfig& cfg) : MemorySystem(cfg), counters_(cfg.secscale.merkle.counter_cache_bytes) {}

void PenglaiModel::register_enclave(EnclaveId enclave, std::uint64_t vpages) { alloc_.add(layout_, enclave, vpages); }

void PenglaiModel::check_counters(PageNum page) {
  if (!cfg_.integrity_tree_costs) return;
  const PhysAddr leaf{page.value * 64};
  if (counters_.lookup(leaf)) return;
  ++mmt_accesses_;
  timing_.charge(Event::DramAccess);
  const std::uint64_t subtree = page.value / cfg_.penglai.subtree_pages;
  ++clock_;
  auto it = std::find_if(roots_.begin(), roots_.end(), [&](const auto& r) { return r.first == subtree; });
  if (it != roots_.end()) {
    ++root_hits_;
    it->second = clock_;
    timing_.charge(Event::MacCompute);
  } else {
    ++root_misses_;
    timing_.charge(Event::PenglaiRootMiss);
    timing_.charge(Event::DramAccess, cfg_.penglai.walk_levels);
    timing_.charge(Event::MacCompute, cfg_.penglai.walk_levels + 1);
    mmt_accesses_ += cfg_.penglai.walk_levels;
    if (roots_.size() < cfg_.penglai.root_cache_entries) {
      roots_.emplace_back(subtree, clock_);
    } else {
      auto lru = std::min_element(roots_.begin(), roots_.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
      *lru = {subtree, clock_};
    }
  }
  counters_.insert(leaf, MerkleNode{});
}

Block PenglaiModel::read(EnclaveId enclave, std::uint64_t vaddr) {
  const PageNum p = alloc_.translate(enclave, vaddr / kPageSize);
  check_counters(p);
  Block out;
  dram_.read(block_addr(p, block_of(vaddr)), out, Cause::Data);
  timing_.charge(Event::DramAccess);
  timing_.charge(Event::CtrCrypt);
  return out;
}

void PenglaiModel::write(EnclaveId enclave, std::uint64_t vaddr, const Block& data) {
  const PageNum p = alloc_.translate(enclave, vaddr / kPageSize);
  check_counters(p);
  dram_.write(block_addr(p, block_of(vaddr)), data, Cause::Data);
  timing_.charge(Event::DramAccess);
  timing_.charge(Event::CtrCrypt);
  if (!cfg_.integrity_tree_costs) return;
  // Write-through leaf counter update.
  ++mmt_accesses_;
  timing_.charge(Event::DramAccess);
  timing_.charge(Event::MacCompute);
}

Block PenglaiModel::peek_plain(EnclaveId enclave, std::uint64_t vaddr) const {
  Block out;
  dram_.peek(block_addr(alloc_.translate(enclave, vaddr / kPageSize), block_of(vaddr)), out);
  return out;
}

void PenglaiModel::fill_report(Report& r) const {
  MemorySystem::fill_report(r);
  r.dram_by_cause[static_cast<std::size_t>(Cause::Merkle)] += mmt_accesses_;
  r.root_cache_hits = root_hits_;
  r.root_cache_misses = root_misses_;
}

// ---- SecScale --------------------------------------------------------------------

SecScaleModel::SecScaleModel(const SimConfig& cfg) : MemorySystem(cfg) {
  mgr_ = std::make_unique<EpcManager>(dram_, timing_, cfg.secscale, SecretKeys::from_seed(cfg.seed));
}

void SecScaleModel::register_enclave(EnclaveId enclave, std::uint64_t vpages) { mgr_->register_enclave(enclave, vpages); }

Block SecScaleModel::read(EnclaveId enclave, std::uint64_t vaddr) {
  return mgr_->access(enclave, vaddr, AccessKind::Read).data;
}

void SecScaleModel::write(EnclaveId enclave, std::uint64_t vaddr, const Block& data) {
  mgr_->access(enclave, vaddr, AccessKind::Write, &data);
}

void SecScaleModel::syscall(EnclaveId /*enclave*/) {
  mgr_->advance();
  mgr_->syscall_barrier();
}

void SecScaleModel::finish() { mgr_->quiesce(); }

Block SecScaleModel::peek_plain(EnclaveId enclave, std::uint64_t vaddr) const { return mgr_->peek(enclave, vaddr); }

void SecScaleModel::fill_report(Report& r) const {
  MemorySystem::fill_report(r);
  const auto& s = mgr_->stats();
  r.epc_faults = s.faults;
  r.read_faults = s.read_faults;
  r.evictions = s.evictions;
  r.demand_fetches = s.demand_fetches;
  r.barriers = s.barriers;
  r.forest_updates = s.forest_updates;
  r.clubbed_updates = s.clubbed_updates;
  r.top_cache_hits = mgr_->forest().top_cache().hits();
  r.top_cache_misses = mgr_->forest().top_cache().misses();
  r.verifications = mgr_->forest().stats().verifications;
  r.max_forest_accesses_per_verification = mgr_->forest().stats().max_verify_accesses;
  if (s.read_faults) {
    r.min_read_fault_critical_reads = s.min_read_fault_critical_reads;
    r.max_read_fault_critical_reads = s.max_read_fault_critical_reads;
  }
}

std::unique_ptr<MemorySystem> make_model(const SimConfig& cfg) {
  cfg.validate();
  switch (cfg.model) {
    case ModelKind::Baseline: return std::make_unique<BaselineModel>(cfg);
    case ModelKind::SgxClient: return std::make_unique<SgxClientModel>(cfg);
    case ModelKind::Dfp: return std::make_unique<DfpModel>(cfg);
    case ModelKind::PenglaiMmt: return std::make_unique<PenglaiModel>(cfg);
    case ModelKind::SecScale: return std::make_unique<SecScaleModel>(cfg);
  }
  throw ConfigError("model", "unknown model");
}

// ---- engine ----------------------------------------------------------------------

std::map<EnclaveId, std::uint64_t> enclave_footprints(const std::vector<MemEvent>& events) {
  std::map<EnclaveId, std::uint64_t> out;
  for (const auto& e : events) {
    if (e.kind == MemEvent::Kind::Syscall) {
      out.try_emplace(e.enclave, 1);
      continue;
    }
    const std::uint64_t vpage = e.vaddr / kPageSize;
    if (vpage >= kScratchVpageBase) {
      out.try_emplace(e.enclave, 1);
      continue;
    }
    auto& n = out[e.enclave];
    n = std::max(n, vpage + 1);
  }
  return out;
}

Report run_events(MemorySystem& model, const FilteredTrace& trace, const RunOptions& opts) {
  Report r;
  r.cache = trace.stats;
  const auto footprints = opts.footprints.empty() ? enclave_footprints(trace.events) : opts.footprints;
  for (const auto& [enclave, pages] : footprints) model.register_enclave(enclave, pages);
  const std::size_t flush_begin = std::min(trace.flush_begin ? trace.flush_begin : trace.events.size(), trace.events.size());
  std::optional<TimingModel> timed;
  std::uint64_t last = 0;
  std::size_t i = 0;
  try {
    for (; i < trace.events.size(); ++i) {
      if (i == flush_begin) {
        // The closing cache flush is functional only: time stops at the last record.
        model.finish();
        timed = model.timing();
      }
      if (opts.before_event) opts.before_event(i, model);
      const MemEvent& ev = trace.events[i];
      if (ev.icount > last) {
        model.timing().retire_instructions(ev.icount - last);
        last = ev.icount;
      }
      model.set_future(&trace.events, i + 1);
      switch (ev.kind) {
        case MemEvent::Kind::Fill: {
          const Block got = model.read(ev.enclave, ev.vaddr);
          if (opts.check_fills && got != ev.data) ++r.fill_mismatches;
          break;
        }
        case MemEvent::Kind::Writeback: model.write(ev.enclave, ev.vaddr, ev.data); break;
        case MemEvent::Kind::Syscall: model.syscall(ev.enclave); break;
      }
    }
    model.finish();
  } catch (const CatastrophicFailure& f) {
    r.security_event = SecurityEventRecord{f.kind(), f.page(), f.detail(), f.speculative_instructions(), i};
  }
  model.fill_report(r);
  if (timed) {
    r.total_cycles = timed->total_cycles();
    r.critical_cycles = timed->stats().critical;
    r.stall_cycles = timed->stats().stall;
    r.lane_busy = timed->stats().lane_busy;
    r.instructions = timed->instructions();
  }
  r.finalize();
  return r;
}

Report run(const SimConfig& cfg, const FilteredTrace& trace, const RunOptions& opts) {
  auto model = make_model(cfg);
  return run_events(*model, trace, opts);
}

Report run(const SimConfig& cfg, const std::vector<TraceRecord>& records) {
  if (records.empty()) throw DomainError("empty trace");
  return run(cfg, llc_filter(records, cfg.cache));
}

std::vector<ComparisonRow> compare(const std::vector<std::pair<std::string, SimConfig>>& configs,
                                   const FilteredTrace& trace) {
  if (configs.size() < 2) throw ConfigError("models", "compare needs at least two models");
  std::vector<SimConfig> batch{configs.front().second};
  batch.front().model = ModelKind::Baseline;
  for (const auto& c : configs) batch.push_back(c.second);
  const std::vector<Report> reports = kernels::run_batch_parallel(batch, trace);
  std::vector<ComparisonRow> rows;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    ComparisonRow row{configs[i].first, reports[i + 1], 0.0};
    row.normalized_performance = ratio(row.report.performance, reports.front().performance);
    rows.push_back(std::move(row));
  }
  return rows;
}

StorageBreakdown storage_breakdown(std::uint64_t total_size, std::uint64_t epc_size, const ForestConfig& forest,
                                   const MerkleTreeConfig& merkle) {
  if (total_size == 0 || epc_size == 0) throw DomainError("sizes must be positive");
  forest.validate();
  StorageBreakdown b;
  b.total_size = total_size;
  b.forest_bytes = forest_storage_bytes(total_size, forest);
  b.forest_top_bytes = forest_top_bytes(total_size, forest);
  b.forest_top_macs = b.forest_top_bytes / 8;
  b.merkle_bytes = merkle_storage_bytes(epc_size, merkle);
  b.key_table_bytes = total_size / kPageSize * kKeySlotBytes;
  b.combined_bytes = b.forest_bytes + b.merkle_bytes;
  return b;
}

// ---- serialization -----------------------------------------------------------------

void write_report_json(std::ostream& out, const Report& r) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["model"] = r.model;
  j["seed"] = r.seed;
  j["cycles"] = {{"total", r.total_cycles},
                 {"critical", r.critical_cycles},
                 {"stall", r.stall_cycles},
                 {"background", {{"transfer", r.lane_busy[0]}, {"verify", r.lane_busy[1]}, {"prefetch", r.lane_busy[2]}}}};
  j["instructions"] = r.instructions;
  j["performance"] = r.performance;
  ordered_json cause;
  for (std::size_t c = 0; c < kCauseCount; ++c) cause[std::string(to_string(static_cast<Cause>(c)))] = r.dram_by_cause[c];
  ordered_json region;
  for (std::size_t g = 0; g < kRegionCount; ++g)
    region[std::string(to_string(static_cast<Region>(g)))] = {{"reads", r.dram_reads[g]}, {"writes", r.dram_writes[g]}};
  j["dram"] = {{"by_cause", cause}, {"by_region", region}};
  j["cache"] = {{"accesses", r.cache.accesses}, {"l1_hits", r.cache.l1_hits}, {"l1_misses", r.cache.l1_misses},
                {"l2_hits", r.cache.l2_hits},       {"llc_misses", r.cache.llc_misses}, {"writebacks", r.cache.writebacks},
                {"syscalls", r.cache.syscalls}};
  j["epc"] = {{"faults", r.epc_faults},
              {"read_faults", r.read_faults},
              {"evictions", r.evictions},
              {"evictions_per_1k_instructions", r.evictions_per_1k_instructions},
              {"miss_pct_of_llc_misses", r.epc_miss_pct},
              {"demand_fetches", r.demand_fetches},
              {"read_fault_critical_reads", {{"min", r.min_read_fault_critical_reads}, {"max", r.max_read_fault_critical_reads}}}};
  j["forest"] = {{"updates", r.forest_updates},
                 {"clubbed_updates", r.clubbed_updates},
                 {"clubbing_frequency", r.clubbing_frequency},
                 {"top_cache_hits", r.top_cache_hits},
                 {"top_cache_misses", r.top_cache_misses},
                 {"top_cache_hit_rate", r.top_cache_hit_rate},
                 {"verifications", r.verifications},
                 {"max_accesses_per_verification", r.max_forest_accesses_per_verification}};
  j["prefetch"] = {{"issued", r.prefetches}, {"useful", r.useful_prefetches}};
  j["root_cache"] = {{"hits", r.root_cache_hits}, {"misses", r.root_cache_misses}};
  j["barriers"] = r.barriers;
  j["fill_mismatches"] = r.fill_mismatches;
  if (r.security_event) {
    const auto& e = *r.security_event;
    j["security_event"] = {{"kind", to_string(e.kind)},
                           {"page", e.page},
                           {"detail", e.detail},
                           {"speculative_instructions", e.speculative_instructions},
                           {"event_index", e.event_index}};
  } else {
    j["security_event"] = nullptr;
  }
  out << j.dump(2) << '\n';
}

std::string report_csv_header() {
  return "model,seed,total_cycles,critical_cycles,stall_cycles,instructions,performance,"
         "dram_data,dram_merkle,dram_forest,dram_key_table,llc_misses,epc_faults,evictions,"
         "evictions_per_1k_instructions,epc_miss_pct,clubbing_frequency,top_cache_hit_rate,"
         "max_forest_accesses_per_verification,security_event";
}

std::string report_csv_row(const Report& r) {
  std::ostringstream o;
  o.precision(9);
  o << r.model << ',' << r.seed << ',' << r.total_cycles << ',' << r.critical_cycles << ',' << r.stall_cycles << ','
    << r.instructions << ',' << r.performance;
  for (auto c : r.dram_by_cause) o << ',' << c;
  o << ',' << r.cache.llc_misses << ',' << r.epc_faults << ',' << r.evictions << ',' << r.evictions_per_1k_instructions
    << ',' << r.epc_miss_pct << ',' << r.clubbing_frequency << ',' << r.top_cache_hit_rate << ','
    << r.max_forest_accesses_per_verification << ',' << (r.security_event ? to_string(r.security_event->kind) : "");
  return o.str();
}

void write_comparison_csv(std::ostream& out, const std::vector<ComparisonRow>& rows) {
  out << "label,normalized_performance," << report_csv_header() << '\n';
  out.precision(9);
  for (const auto& row : rows) out << row.label << ',' << row.normalized_performance << ',' << report_csv_row(row.report) << '\n';
}

}  // namespace secscale
