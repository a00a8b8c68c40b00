#include "secscale/epc_manager.hpp"

#include <algorithm>
#include <cstring>
#include <string>

namespace secscale {

namespace {

Digest256 labelled_digest(std::string_view label, std::uint64_t seed) {
  std::vector<std::uint8_t> buf(label.begin(), label.end());
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(seed >> (8 * i)));
  return sha256(buf);
}

bool all_zero(std::span<const std::uint8_t> bytes) {
  return std::all_of(bytes.begin(), bytes.end(), [](std::uint8_t b) { return b == 0; });
}

[[noreturn]] void mapping_violation(PageNum page, const std::string& what) {
  throw CatastrophicFailure(SecurityEventKind::MappingViolation, page.value, what);
}

}  // namespace

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::EpcHit: return "epc_hit";
    case Outcome::FaultStarted: return "fault_started";
    case Outcome::DemandFetch: return "demand_fetch";
    case Outcome::QueuedWrite: return "queued_write";
    case Outcome::ScratchAccess: return "scratch_access";
  }
  return "?";
}

SecretKeys SecretKeys::from_seed(std::uint64_t seed) {
  SecretKeys k;
  const Digest256 hw = labelled_digest("hw-key", seed);
  std::memcpy(&k.hw_key, hw.data(), 8);
  const Digest256 dev = labelled_digest("device-key-2", seed);
  std::memcpy(k.ssk.device_key2.data(), dev.data(), 16);
  const Digest256 boot = labelled_digest("boot-time", seed);
  std::memcpy(k.ssk.boot_time.data(), boot.data(), 16);
  k.epc.data_key = labelled_digest("epc-data", seed);
  k.epc.mac_key = labelled_digest("epc-mac", seed);
  return k;
}

std::optional<PageNum> PageTable::lookup(EnclaveId enclave, std::uint64_t vpage) const {
  auto it = entries_.find({enclave, vpage});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> EshrTable::allocate() {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!entries_[i].v_bit) {
      entries_[i] = EshrEntry{};
      return i;
    }
  }
  return std::nullopt;
}

std::size_t EshrTable::live() const {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [](const EshrEntry& e) { return e.v_bit; }));
}

std::optional<std::size_t> EshrTable::find_load(PageNum page) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].v_bit && entries_[i].has_load && entries_[i].lpage == page) return i;
  return std::nullopt;
}

std::optional<std::size_t> EshrTable::find_evict(PageNum page) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].v_bit && entries_[i].e_bit && entries_[i].epage == page) return i;
  return std::nullopt;
}

std::optional<std::size_t> EshrTable::oldest() const {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].v_bit && (!best || entries_[i].seq < entries_[*best].seq)) best = i;
  return best;
}

std::uint64_t EpcManager::epc_bytes_needed(std::uint64_t data_pages, std::uint64_t total_size,
                                           const SecScaleConfig& cfg) {
  const auto geo = ForestGeometry::build(total_size / kPageSize, cfg.forest);
  const std::uint64_t top_pages = TopLevelStore::pages_for(geo.top_count());
  return ProtectedEpc::region_bytes(data_pages, cfg.merkle) + ProtectedEpc::region_bytes(top_pages, cfg.merkle);
}

EpcManager::EpcManager(EmulatedDram& dram, TimingModel& timing, const SecScaleConfig& cfg,
                       const SecretKeys& keys)
    : dram_(&dram),
      timing_(&timing),
      cfg_(cfg),
      keys_(keys),
      prng_(keys.ssk.boot_time, keys.hw_key, cfg.key_source),
      eshr_(cfg.eshr_entries) {
  if (cfg.eshr_entries == 0) throw ConfigError("secscale.eshr_entries", "must be >= 1");
  const MemoryLayout& layout = dram.layout();
  const auto geo = ForestGeometry::build(layout.total_pages(), cfg.forest);
  const std::uint64_t top_pages = TopLevelStore::pages_for(geo.top_count());
  const std::uint64_t top_bytes = ProtectedEpc::region_bytes(top_pages, cfg.merkle);
  if (top_bytes >= layout.epc_size()) throw LayoutError("EPC too small for the forest top level");
  const std::uint64_t avail = layout.epc_size() - top_bytes;
  std::uint64_t pages = cfg.epc_data_pages;
  if (pages == 0) {
    std::uint64_t lo = 0;
    std::uint64_t hi = avail / kPageSize;
    while (lo < hi) {
      const std::uint64_t mid = (lo + hi + 1) / 2;
      if (ProtectedEpc::region_bytes(mid, cfg.merkle) <= avail)
        lo = mid;
      else
        hi = mid - 1;
    }
    pages = lo;
  }
  if (pages == 0 || ProtectedEpc::region_bytes(pages, cfg.merkle) > avail)
    throw LayoutError("EPC cannot hold " + std::to_string(pages) + " data pages");
  const PhysAddr base{layout.epc_base()};
  data_epc_ = std::make_unique<ProtectedEpc>(dram, base, pages, cfg.merkle, keys.epc);
  top_epc_ = std::make_unique<ProtectedEpc>(dram, base + ProtectedEpc::region_bytes(pages, cfg.merkle),
                                            top_pages, cfg.merkle, keys.epc);
  data_epc_->initialize();
  top_epc_->initialize();
  top_store_ = std::make_unique<TopLevelStore>(*top_epc_);
  forest_ = std::make_unique<MacForest>(dram, cfg.forest, keys.ssk, *top_store_);
  mvc_ = std::make_unique<Mvc>(*forest_, timing, cfg.mvc);
  mvc_->set_pre_verify_hook([this](std::uint64_t region) { flush_pending_update(region); });
  slots_.resize(pages);
}

void EpcManager::register_enclave(EnclaveId enclave, std::uint64_t vpages) {
  if (enclaves_.count(enclave)) throw DomainError("enclave " + std::to_string(enclave) + " already registered");
  if (vpages == 0 || vpages >= kScratchVpageBase) throw DomainError("enclave size out of range");
  const MemoryLayout& layout = dram_->layout();
  if (next_eepc_index_ + vpages > layout.eepc_pages())
    throw LayoutError("eEPC exhausted registering enclave " + std::to_string(enclave));
  const std::uint64_t first = next_eepc_index_;
  next_eepc_index_ += vpages;
  enclaves_[enclave] = {first, vpages};
  std::uint64_t s = 0;
  for (std::uint64_t v = 0; v < vpages; ++v) {
    const PageNum phys = layout.eepc_page(first + v);
    page_table_.map(enclave, v, phys);
    while (s < slots_.size() && (slots_[s].valid || slots_[s].reserved || slots_[s].used)) ++s;
    if (s < slots_.size()) {
      slots_[s] = EpcSlot{true, false, true, enclave, v, phys, ++lru_clock_};
      inverted_[phys.value] = s;
    }
  }
  const std::uint64_t scratch_first = layout.scratch_base() / kPageSize;
  for (std::uint64_t i = 0; i < layout.scratch_pages(); ++i)
    page_table_.map(enclave, kScratchVpageBase + i, PageNum{scratch_first + i});
  refresh_evict_register();
}

std::optional<EnclaveId> EpcManager::owner_of(PageNum page) const {
  const MemoryLayout& layout = dram_->layout();
  for (const auto& [id, range] : enclaves_) {
    for (std::uint64_t v = 0; v < range.second; ++v)
      if (layout.eepc_page(range.first + v) == page) return id;
  }
  return std::nullopt;
}

std::pair<std::uint64_t, std::uint64_t> EpcManager::enclave_range(EnclaveId enclave) const {
  auto it = enclaves_.find(enclave);
  if (it == enclaves_.end()) throw DomainError("unknown enclave " + std::to_string(enclave));
  return it->second;
}

PageNum EpcManager::translate(EnclaveId enclave, std::uint64_t vpage) const {
  if (auto p = page_table_.lookup(enclave, vpage)) return *p;
  throw CatastrophicFailure(SecurityEventKind::MappingViolation, vpage,
                            "enclave " + std::to_string(enclave) + " has no mapping for this page");
}

std::optional<std::uint64_t> EpcManager::resident_slot(PageNum page) const {
  auto it = inverted_.find(page.value);
  if (it == inverted_.end()) return std::nullopt;
  return it->second;
}

std::optional<PageKey> EpcManager::stored_key(PageNum page, EnclaveId owner) const {
  WrappedKey w;
  dram_->peek(dram_->layout().key_table_slot(page), w);
  if (all_zero(w)) return std::nullopt;
  return compose_page_key(keys_.hw_key, owner, unwrap_key(keys_.ssk, w), static_cast<std::uint32_t>(page.value));
}

void EpcManager::touch(std::uint64_t slot) {
  slots_[slot].lru = ++lru_clock_;
  if (evict_reg_.valid && evict_reg_.slot == slot) evict_reg_.valid = false;
}

std::uint64_t EpcManager::lru_victim() const {
  std::optional<std::uint64_t> best;
  for (std::uint64_t i = 0; i < slots_.size(); ++i)
    if (slots_[i].valid && (!best || slots_[i].lru < slots_[*best].lru)) best = i;
  if (!best) throw DomainError("no occupied EPC slot to evict");
  return *best;
}

void EpcManager::refresh_evict_register() {
  const bool any = std::any_of(slots_.begin(), slots_.end(), [](const EpcSlot& s) { return s.valid; });
  evict_reg_ = any ? EvictRegister{true, lru_victim()} : EvictRegister{};
}

std::uint64_t EpcManager::evict_select() {
  if (evict_reg_.valid) return evict_reg_.slot;
  return lru_victim();
}

Random128 EpcManager::read_key_slot(PageNum page, bool critical, bool& fresh) {
  WrappedKey w;
  dram_->read(dram_->layout().key_table_slot(page), w, Cause::KeyTable);
  if (critical)
    timing_->charge(Event::DramAccess);
  else
    timing_->charge(Lane::Transfer, Event::DramBurst);
  fresh = all_zero(w);
  return fresh ? Random128{} : unwrap_key(keys_.ssk, w);
}

std::size_t EpcManager::start_entry() {
  auto idx = eshr_.allocate();
  if (!idx) {
    ++stats_.eshr_full_stalls;
    drain_entry(*eshr_.oldest());
    idx = eshr_.allocate();
  }
  EshrEntry& en = eshr_.at(*idx);
  en.v_bit = true;
  en.seq = ++seq_;
  en.ready_at = timing_->now();
  std::optional<std::uint64_t> free;
  for (std::uint64_t i = 0; i < slots_.size(); ++i) {
    if (!slots_[i].valid && !slots_[i].reserved) {
      free = i;
      break;
    }
  }
  if (free) {
    en.slot = *free;
  } else {
    const std::uint64_t victim = evict_select();
    if (auto li = eshr_.find_load(slots_[victim].phys)) {
      ++stats_.forced_drains;
      drain_entry(*li);
    }
    const EpcSlot& vs = slots_[victim];
    en.slot = victim;
    en.e_bit = true;
    en.epage = vs.phys;
    en.evict_key = compose_page_key(keys_.hw_key, vs.owner, prng_.next128(), static_cast<std::uint32_t>(vs.phys.value));
    inverted_.erase(vs.phys.value);
    ++stats_.evictions;
  }
  if (evict_reg_.valid && evict_reg_.slot == en.slot) evict_reg_.valid = false;
  stats_.max_live_entries = std::max<std::uint64_t>(stats_.max_live_entries, eshr_.live());
  return *idx;
}

AccessResult EpcManager::access(EnclaveId enclave, std::uint64_t vaddr, AccessKind kind, const Block* data) {
  if (kind == AccessKind::Write && !data) throw DomainError("write access without data");
  advance();
  const std::uint64_t vpage = vaddr / kPageSize;
  const auto b = static_cast<unsigned>((vaddr % kPageSize) / kBlockSize);
  const PageNum p = translate(enclave, vpage);
  const MemoryLayout& layout = dram_->layout();
  const Region region = p.value < layout.total_pages() ? layout.classify(p) : Region::Epc;
  if (p.value >= layout.total_pages()) mapping_violation(p, "mapping outside physical memory");
  const bool scratch_vpage = vpage >= kScratchVpageBase;
  if (region == Region::Scratch) {
    if (!scratch_vpage) mapping_violation(p, "secure page mapped to scratch memory");
    return scratch_access(enclave, p, vaddr % kPageSize, kind, data);
  }
  if (scratch_vpage || region != Region::Eepc) mapping_violation(p, "page mapped outside the eEPC");

  AccessResult r;
  if (auto s = resident_slot(p)) {
    EpcSlot& sl = slots_[*s];
    if (sl.owner != enclave)
      throw CatastrophicFailure(SecurityEventKind::CrossEnclaveMapping, p.value,
                                "page owned by enclave " + std::to_string(sl.owner) + " accessed by enclave " +
                                    std::to_string(enclave));
    if (sl.vpage != vpage) mapping_violation(p, "page mapped at a second virtual address");
    touch(*s);
    if (auto li = eshr_.find_load(p); li && !eshr_.at(*li).ls_vector[b]) {
      EshrEntry& en = eshr_.at(*li);
      r.eshr_index = *li;
      if (kind == AccessKind::Write) {
        en.pending_write.set(b);
        en.pending_data[b] = *data;
        ++stats_.queued_writes;
        r.outcome = Outcome::QueuedWrite;
        return r;
      }
      r.outcome = Outcome::DemandFetch;
      ++stats_.demand_fetches;
      en.priority_block = b;
      if (en.pending_write[b]) {
        r.data = en.pending_data[b];
        return r;
      }
      if (!en.fetched[b]) {
        dram_->read(block_addr(p, b), en.fetched_cipher[b], Cause::Data);
        en.fetched.set(b);
        timing_->charge(Event::DramAccess);
        r.critical_reads = 1;
      }
      if (!en.load_fresh) {
        r.data = ecb_decrypt_block(derive_block_key(en.load_key, b), en.fetched_cipher[b]);
        timing_->charge(Event::EcbCrypt);
      }
      return r;
    }
    const std::uint64_t before = dram_->total_accesses();
    if (kind == AccessKind::Read)
      r.data = data_epc_->read_block(*s, b).data;
    else
      data_epc_->write_block(*s, b, *data);
    timing_->charge(Event::DramAccess, dram_->total_accesses() - before);
    timing_->charge(Event::CtrCrypt);
    ++stats_.hits;
    r.outcome = Outcome::EpcHit;
    return r;
  }

  if (auto ei = eshr_.find_evict(p)) {
    ++stats_.forced_drains;
    drain_entry(*ei);
  }
  const std::size_t idx = start_entry();
  EshrEntry& en = eshr_.at(idx);
  en.has_load = true;
  en.lpage = p;
  slots_[en.slot] = EpcSlot{true, false, true, enclave, vpage, p, ++lru_clock_};
  inverted_[p.value] = en.slot;
  ++stats_.faults;
  r.eshr_index = idx;
  if (kind == AccessKind::Read) {
    const std::uint64_t before = dram_->total_accesses();
    bool fresh = false;
    const Random128 rnd = read_key_slot(p, true, fresh);
    dram_->read(block_addr(p, b), en.fetched_cipher[b], Cause::Data);
    timing_->charge(Event::DramAccess);
    en.fetched.set(b);
    en.load_fresh = fresh;
    if (!fresh) {
      en.load_key = compose_page_key(keys_.hw_key, enclave, rnd, static_cast<std::uint32_t>(p.value));
      r.data = ecb_decrypt_block(derive_block_key(en.load_key, b), en.fetched_cipher[b]);
      timing_->charge(Event::EcbCrypt, 2);
    }
    en.priority_block = b;
    r.critical_reads = static_cast<unsigned>(dram_->total_accesses() - before);
    ++stats_.read_faults;
    stats_.min_read_fault_critical_reads = std::min<std::uint64_t>(stats_.min_read_fault_critical_reads, r.critical_reads);
    stats_.max_read_fault_critical_reads = std::max<std::uint64_t>(stats_.max_read_fault_critical_reads, r.critical_reads);
    r.outcome = Outcome::FaultStarted;
  } else {
    bool fresh = false;
    const Random128 rnd = read_key_slot(p, false, fresh);
    en.load_fresh = fresh;
    if (!fresh) en.load_key = compose_page_key(keys_.hw_key, enclave, rnd, static_cast<std::uint32_t>(p.value));
    en.pending_write.set(b);
    en.pending_data[b] = *data;
    ++stats_.queued_writes;
    r.outcome = Outcome::QueuedWrite;
  }
  refresh_evict_register();
  if (!cfg_.mvc.deferred) drain_entry(idx);
  return r;
}

std::optional<std::size_t> EpcManager::next_entry() const {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < eshr_.capacity(); ++i) {
    const EshrEntry& e = eshr_.at(i);
    if (!e.v_bit) continue;
    if (e.priority_block && !e.ls_vector[*e.priority_block]) return i;
    if (!best || e.seq < eshr_.at(*best).seq) best = i;
  }
  return best;
}

std::optional<unsigned> EpcManager::next_block(const EshrEntry& e) const {
  if (e.priority_block && !e.ls_vector[*e.priority_block]) return e.priority_block;
  for (unsigned b = 0; b < kBlocksPerPage; ++b)
    if (!e.ls_vector[b]) return b;
  return std::nullopt;
}

void EpcManager::run_step(std::size_t idx, unsigned block) {
  EshrEntry& en = eshr_.at(idx);
  const std::uint64_t before = dram_->total_accesses();
  unsigned crypto_ops = 0;
  if (en.e_bit) {
    const Block pt = data_epc_->read_block(en.slot, block, Cause::Data).data;
    std::memcpy(en.evict_plain.data() + block * kBlockSize, pt.data(), kBlockSize);
    const Block ct = ecb_encrypt_block(derive_block_key(en.evict_key, block), pt);
    dram_->write(block_addr(en.epage, block), ct, Cause::Data);
    crypto_ops += 2;
  }
  if (en.has_load) {
    if (!en.fetched[block]) {
      dram_->read(block_addr(en.lpage, block), en.fetched_cipher[block], Cause::Data);
      en.fetched.set(block);
    }
    Block pt{};
    if (!en.load_fresh) {
      pt = ecb_decrypt_block(derive_block_key(en.load_key, block), en.fetched_cipher[block]);
      ++crypto_ops;
    }
    std::memcpy(en.load_plain.data() + block * kBlockSize, pt.data(), kBlockSize);
    data_epc_->write_block(en.slot, block, en.pending_write[block] ? en.pending_data[block] : pt, Cause::Data);
    ++crypto_ops;
  }
  en.ls_vector.set(block);
  if (en.priority_block == block) en.priority_block.reset();
  ++stats_.steps;
  const Cycle cycles =
      timing_->cost(Event::DramBurst, dram_->total_accesses() - before) + timing_->stream_crypto_cycles(crypto_ops);
  timing_->charge_cycles(Lane::Transfer, cycles, en.ready_at);
  if (en.ls_vector.all()) complete(idx);
}

bool EpcManager::fault_step() {
  const auto idx = next_entry();
  if (!idx) return false;
  run_step(*idx, *next_block(eshr_.at(*idx)));
  return true;
}

void EpcManager::complete(std::size_t idx) {
  EshrEntry& en = eshr_.at(idx);
  en.v_bit = false;
  const Cycle done = timing_->lane_free(Lane::Transfer);
  if (en.e_bit) {
    const WrappedKey w = wrap_key(keys_.ssk, en.evict_key);
    dram_->write(dram_->layout().key_table_slot(en.epage), w, Cause::KeyTable);
    timing_->charge(Lane::Transfer, Event::DramBurst, 1, done);
    // The victim MAC is hashed as its blocks stream out; only the final keyed step remains.
    const Mac mac = page_mac(en.evict_key, en.evict_plain);
    const Cycle hashed = timing_->charge(Lane::Transfer, Event::MacCompute, 1, done);
    // A still-queued check of the victim must finish against its old leaf.
    const Cycle verified = mvc_->retire_through(en.epage);
    forest_update({en.epage, mac}, std::max(hashed, verified));
    if (!en.has_load) {
      slots_[en.slot].valid = false;
      slots_[en.slot].reserved = false;
    }
  }
  if (en.has_load) {
    VerificationJob job;
    job.pages.push_back({en.lpage, en.load_key, std::make_shared<const PageBytes>(en.load_plain)});
    job.ready_at = done;
    mvc_->enqueue(std::move(job));
  }
}

void EpcManager::forest_update(ForestUpdate u, Cycle ready) {
  unsigned n = 0;
  if (pending_update_ && forest_->region_of(pending_update_->page) == forest_->region_of(u.page)) {
    n = forest_->update_on_evict(pending_update_->page, pending_update_->mac, u);
    pending_update_.reset();
    ++stats_.clubbed_updates;
  } else {
    flush_pending_update();
    if (cfg_.clubbing) {
      const bool any = std::any_of(slots_.begin(), slots_.end(), [](const EpcSlot& s) { return s.valid; });
      if (any) {
        const PageNum next = slots_[evict_select()].phys;
        if (forest_->region_of(next) == forest_->region_of(u.page) && next != u.page) {
          pending_update_ = u;
          return;
        }
      }
    }
    n = forest_->update_on_evict(u.page, u.mac);
  }
  ++stats_.forest_updates;
  timing_->charge_cycles(Lane::Transfer,
                         timing_->cost(Event::DramAccess, n) +
                             timing_->cost(Event::MacCompute, forest_->geometry().levels() - 1),
                         ready);
}

void EpcManager::flush_pending_update(std::optional<std::uint64_t> region) {
  if (!pending_update_) return;
  if (region && forest_->region_of(pending_update_->page) != *region) return;
  const ForestUpdate u = *pending_update_;
  pending_update_.reset();
  const unsigned n = forest_->update_on_evict(u.page, u.mac);
  ++stats_.forest_updates;
  timing_->charge_cycles(Lane::Transfer,
                         timing_->cost(Event::DramAccess, n) +
                             timing_->cost(Event::MacCompute, forest_->geometry().levels() - 1));
}

void EpcManager::drain_entry(std::size_t idx) {
  while (eshr_.at(idx).v_bit) run_step(idx, *next_block(eshr_.at(idx)));
  timing_->wait_for(Lane::Transfer);
}

void EpcManager::advance() {
  for (;;) {
    const auto idx = next_entry();
    if (!idx) break;
    const EshrEntry& en = eshr_.at(*idx);
    if (std::max(timing_->lane_free(Lane::Transfer), en.ready_at) >= timing_->now()) break;
    run_step(*idx, *next_block(en));
  }
  mvc_->advance_to(timing_->now());
}

Cycle EpcManager::syscall_barrier() {
  const Cycle before = timing_->now();
  while (auto i = eshr_.oldest()) drain_entry(*i);
  mvc_->drain();
  ++stats_.barriers;
  const Cycle stall = timing_->now() - before;
  stats_.barrier_stall += stall;
  return stall;
}

AccessResult EpcManager::scratch_access(EnclaveId /*enclave*/, PageNum page, std::uint64_t offset,
                                        AccessKind kind, const Block* data) {
  if (dram_->layout().classify(page) != Region::Scratch) throw DomainError("page is not in the scratch region");
  AccessResult r;
  r.outcome = Outcome::ScratchAccess;
  const PhysAddr addr = block_addr(page, static_cast<unsigned>(offset / kBlockSize));
  if (kind == AccessKind::Write) {
    if (!data) throw DomainError("write access without data");
    // Leaving the enclave is externally visible: pending verification must finish first.
    syscall_barrier();
    dram_->write(addr, *data, Cause::Data);
  } else {
    dram_->read(addr, r.data, Cause::Data);
    r.critical_reads = 1;
  }
  timing_->charge(Event::DramAccess);
  ++stats_.scratch_accesses;
  return r;
}

void EpcManager::flush_page(EnclaveId enclave, std::uint64_t vpage) {
  advance();
  const PageNum p = translate(enclave, vpage);
  if (auto li = eshr_.find_load(p)) drain_entry(*li);
  const auto s = resident_slot(p);
  if (!s) return;
  auto idx = eshr_.allocate();
  if (!idx) {
    drain_entry(*eshr_.oldest());
    idx = eshr_.allocate();
  }
  EshrEntry& en = eshr_.at(*idx);
  EpcSlot& sl = slots_[*s];
  en.v_bit = true;
  en.e_bit = true;
  en.seq = ++seq_;
  en.ready_at = timing_->now();
  en.slot = *s;
  en.epage = p;
  en.evict_key = compose_page_key(keys_.hw_key, sl.owner, prng_.next128(), static_cast<std::uint32_t>(p.value));
  sl.valid = false;
  sl.reserved = true;
  inverted_.erase(p.value);
  if (evict_reg_.valid && evict_reg_.slot == *s) evict_reg_.valid = false;
  ++stats_.evictions;
  drain_entry(*idx);
  refresh_evict_register();
}

void EpcManager::quiesce() {
  syscall_barrier();
  flush_pending_update();
  timing_->drain();
}

Block EpcManager::peek(EnclaveId enclave, std::uint64_t vaddr) const {
  const std::uint64_t vpage = vaddr / kPageSize;
  const auto b = static_cast<unsigned>((vaddr % kPageSize) / kBlockSize);
  const PageNum p = translate(enclave, vpage);
  Block out{};
  if (dram_->layout().classify(p) == Region::Scratch) {
    dram_->peek(block_addr(p, b), out);
    return out;
  }
  if (auto s = resident_slot(p)) {
    if (auto li = eshr_.find_load(p); li && !eshr_.at(*li).ls_vector[b]) {
      const EshrEntry& en = eshr_.at(*li);
      if (en.pending_write[b]) return en.pending_data[b];
      if (en.load_fresh) return out;
      Block ct = en.fetched_cipher[b];
      if (!en.fetched[b]) dram_->peek(block_addr(p, b), ct);
      return ecb_decrypt_block(derive_block_key(en.load_key, b), ct);
    }
    return data_epc_->peek_block(*s, b);
  }
  if (auto ei = eshr_.find_evict(p)) {
    const EshrEntry& en = eshr_.at(*ei);
    if (!en.ls_vector[b]) return data_epc_->peek_block(en.slot, b);
    Block ct;
    dram_->peek(block_addr(p, b), ct);
    return ecb_decrypt_block(derive_block_key(en.evict_key, b), ct);
  }
  const auto key = stored_key(p, enclave);
  if (!key) return out;
  Block ct;
  dram_->peek(block_addr(p, b), ct);
  return ecb_decrypt_block(derive_block_key(*key, b), ct);
}

}  // namespace secscale
