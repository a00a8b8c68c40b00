#include "secscale/adversary.hpp"

#include <algorithm>
#include <map>
#include <random>

namespace secscale {

namespace {

constexpr std::array<std::string_view, 10> kNames{
    "tamper-data",        "tamper-leaf-mac",     "tamper-forest-node", "tamper-key-slot",     "replay-data-mac",
    "replay-key-mac",     "splice-relocate",     "cross-enclave-read", "cross-enclave-write", "replay-epc-counter",
};

struct Target {
  SecScaleModel* secscale = nullptr;
  SgxClientModel* sgx = nullptr;
};

Target resolve(MemorySystem& model) {
  Target t{dynamic_cast<SecScaleModel*>(&model), dynamic_cast<SgxClientModel*>(&model)};
  if (!t.secscale && !t.sgx) throw DomainError("attacks need the secscale or an SGX model");
  return t;
}

EpcManager& manager(const Target& t, AttackKind k) {
  if (!t.secscale) throw DomainError(std::string(to_string(k)) + " needs the secscale model");
  return t.secscale->manager();
}

PageNum phys_of(EpcManager& m, EnclaveId enclave, std::uint64_t vpage) {
  auto p = m.page_table().lookup(enclave, vpage);
  if (!p) throw DomainError("enclave " + std::to_string(enclave) + " has no page " + std::to_string(vpage));
  return *p;
}

// Lowest stored forest level above the leaves, or the leaves for a two-level forest.
std::pair<unsigned, std::uint64_t> forest_node_of(const MacForest& f, PageNum page) {
  const unsigned level = f.geometry().levels() >= 3 ? 1 : 0;
  std::uint64_t idx = page.value;
  for (unsigned l = 0; l < level; ++l) idx /= f.config().arities[l];
  return {level, idx};
}

// EPC store, slot and block for ReplayEpcCounter.
std::pair<ProtectedEpc*, std::uint64_t> epc_slot(const Target& t, const Attack& a) {
  if (t.secscale) {
    EpcManager& m = t.secscale->manager();
    auto s = m.resident_slot(phys_of(m, a.enclave, a.vpage));
    if (!s) throw DomainError("target page is not resident in the EPC");
    return {&m.data_epc(), *s};
  }
  auto s = t.sgx->resident_slot(t.sgx->translate(a.enclave, a.vpage));
  if (!s) throw DomainError("target page is not resident in the EPC");
  return {&t.sgx->epc(), *s};
}

}  // namespace

std::string_view to_string(AttackKind k) { return kNames.at(static_cast<std::size_t>(k)); }

AttackKind parse_attack_kind(std::string_view name) {
  for (auto k : kAllAttackKinds)
    if (to_string(k) == name) return k;
  throw ConfigError("kind", "unknown attack kind `" + std::string(name) + "`");
}

bool is_replay(AttackKind k) {
  return k == AttackKind::ReplayDataMacPair || k == AttackKind::ReplayKeyMacPair || k == AttackKind::ReplayEpcCounter;
}

std::size_t Adversary::snapshot(const EmulatedDram& dram, std::vector<std::pair<PhysAddr, std::size_t>> ranges) {
  Snapshot s;
  for (const auto& [addr, len] : ranges) {
    ByteRange r{addr, std::vector<std::uint8_t>(len)};
    dram.peek(addr, r.bytes);
    s.ranges.push_back(std::move(r));
  }
  snapshots_.push_back(std::move(s));
  return snapshots_.size() - 1;
}

MutationRecord Adversary::restore(EmulatedDram& dram, std::size_t handle) {
  MutationRecord rec;
  for (const auto& r : snapshots_.at(handle).ranges) {
    dram.poke(r.addr, r.bytes);
    rec.touched.emplace_back(r.addr, r.bytes.size());
  }
  return rec;
}

void Adversary::flip_bit(EmulatedDram& dram, PhysAddr addr, unsigned bit) {
  std::uint8_t b = 0;
  const PhysAddr at = addr + bit / 8;
  dram.peek(at, {&b, 1});
  b ^= static_cast<std::uint8_t>(1u << (bit % 8));
  dram.poke(at, {&b, 1});
}

std::size_t Adversary::capture(const Attack& a, MemorySystem& model) {
  const Target t = resolve(model);
  EmulatedDram& dram = model.dram();
  switch (a.kind) {
    case AttackKind::ReplayDataMacPair: {
      EpcManager& m = manager(t, a.kind);
      const PageNum p = phys_of(m, a.enclave, a.vpage);
      // The whole old version, key included, so the leaf is self-consistent.
      return snapshot(dram, {{page_base(p), kPageSize},
                             {dram.layout().key_table_slot(p), kKeySlotBytes},
                             {m.forest().node_addr(0, p.value), 8}});
    }
    case AttackKind::ReplayKeyMacPair: {
      EpcManager& m = manager(t, a.kind);
      const PageNum p = phys_of(m, a.enclave, a.vpage);
      return snapshot(dram, {{dram.layout().key_table_slot(p), kKeySlotBytes}, {m.forest().node_addr(0, p.value), 8}});
    }
    case AttackKind::ReplayEpcCounter: {
      auto [epc, slot] = epc_slot(t, a);
      const unsigned b = a.block % kBlocksPerPage;
      return snapshot(dram, {{epc->data_addr(slot, b), kBlockSize},
                             {epc->mac_addr(slot, b), 8},
                             {epc->tree().node_addr(0, slot), 64}});
    }
    default: throw DomainError(std::string(to_string(a.kind)) + " is not a replay attack");
  }
}

MutationRecord Adversary::inject(const Attack& a, MemorySystem& model) {
  const Target t = resolve(model);
  EmulatedDram& dram = model.dram();
  MutationRecord rec;
  auto flip = [&](PhysAddr addr, std::size_t len) {
    flip_bit(dram, addr, a.bit % static_cast<unsigned>(len * 8));
    rec.touched.emplace_back(addr, len);
  };
  switch (a.kind) {
    case AttackKind::TamperData: {
      EpcManager& m = manager(t, a.kind);
      flip(block_addr(phys_of(m, a.enclave, a.vpage), a.block % kBlocksPerPage), kBlockSize);
      break;
    }
    case AttackKind::TamperLeafMac: {
      EpcManager& m = manager(t, a.kind);
      flip(m.forest().node_addr(0, phys_of(m, a.enclave, a.vpage).value), 8);
      break;
    }
    case AttackKind::TamperForestNode: {
      EpcManager& m = manager(t, a.kind);
      const auto [level, idx] = forest_node_of(m.forest(), phys_of(m, a.enclave, a.vpage));
      flip(m.forest().node_addr(level, idx), 8);
      break;
    }
    case AttackKind::TamperKeySlot: {
      EpcManager& m = manager(t, a.kind);
      flip(dram.layout().key_table_slot(phys_of(m, a.enclave, a.vpage)), kKeySlotBytes);
      break;
    }
    case AttackKind::ReplayDataMacPair:
    case AttackKind::ReplayKeyMacPair:
    case AttackKind::ReplayEpcCounter:
      if (!a.snapshot) throw DomainError("replay attack without a captured snapshot");
      rec = restore(dram, *a.snapshot);
      break;
    case AttackKind::SpliceRelocate: {
      EpcManager& m = manager(t, a.kind);
      const PageNum dst = phys_of(m, a.enclave, a.vpage);
      const PageNum src = phys_of(m, a.enclave, a.peer_vpage);
      auto copy = [&](PhysAddr from, PhysAddr to, std::size_t len) {
        std::vector<std::uint8_t> buf(len);
        dram.peek(from, buf);
        dram.poke(to, buf);
        rec.touched.emplace_back(to, len);
      };
      copy(page_base(src), page_base(dst), kPageSize);
      copy(dram.layout().key_table_slot(src), dram.layout().key_table_slot(dst), kKeySlotBytes);
      copy(m.forest().node_addr(0, src.value), m.forest().node_addr(0, dst.value), 8);
      break;
    }
    case AttackKind::CrossEnclaveRead:
    case AttackKind::CrossEnclaveWrite: {
      EpcManager& m = manager(t, a.kind);
      m.page_table().map(a.attacker, a.peer_vpage, phys_of(m, a.enclave, a.vpage));
      rec.page_table = true;
      break;
    }
  }
  rec.kind = a.kind;
  return rec;
}

StepHook attack_hook(Adversary& adv, std::vector<ScriptedAttack> script) {
  return [&adv, script = std::move(script)](std::size_t index, MemorySystem& model) mutable {
    for (auto& s : script) {
      if (s.capture_tick == index) {
        model.finish();
        s.attack.snapshot = adv.capture(s.attack, model);
      }
      if (s.tick == index) {
        model.finish();
        adv.inject(s.attack, model);
      }
    }
  };
}

SimConfig attack_sim_config(ModelKind model, std::uint64_t seed) {
  SimConfig c;
  c.model = model;
  c.seed = seed;
  c.layout = LayoutConfig{4ull << 20, 0, 96ull << 10, 4, 0};
  return c;
}

namespace {

class Driver {
 public:
  Driver(MemorySystem& model, std::uint64_t seed, std::uint64_t vpages)
      : model_(model), rng_(seed * 0x9e3779b97f4a7c15ull + 7), vpages_(vpages) {}

  void op(EnclaveId e, std::uint64_t vpage, bool write, unsigned block) {
    model_.timing().retire_instructions(40);
    const std::uint64_t vaddr = vpage * kPageSize + block * kBlockSize;
    if (write) {
      Block b;
      for (auto& x : b) x = static_cast<std::uint8_t>(rng_());
      model_.write(e, vaddr, b);
      ref_[{e, vaddr}] = b;
    } else {
      const Block got = model_.read(e, vaddr);
      auto it = ref_.find({e, vaddr});
      if (got != (it == ref_.end() ? Block{} : it->second)) ++mismatches_;
    }
    ++ops_;
  }

  void random_op() {
    const EnclaveId e = 1 + static_cast<EnclaveId>(rng_() % 2);
    op(e, rng_() % vpages_, rng_() % 2, static_cast<unsigned>(rng_() % kBlocksPerPage));
  }
  void background(std::uint64_t n) {
    for (std::uint64_t i = 0; i < n; ++i) random_op();
  }

  std::mt19937_64& rng() { return rng_; }
  std::uint64_t ops() const { return ops_; }
  std::uint64_t mismatches() const { return mismatches_; }

 private:
  MemorySystem& model_;
  std::mt19937_64 rng_;
  std::uint64_t vpages_;
  std::map<std::pair<EnclaveId, std::uint64_t>, Block> ref_;
  std::uint64_t ops_ = 0;
  std::uint64_t mismatches_ = 0;
};

// Enclave-1 pages that are in the eEPC with a stored key.
std::vector<std::uint64_t> evicted_pages(EpcManager& m, std::uint64_t vpages) {
  std::vector<std::uint64_t> out;
  for (std::uint64_t v = 0; v < vpages; ++v) {
    const PageNum p = phys_of(m, 1, v);
    if (!m.resident_slot(p) && m.stored_key(p, 1)) out.push_back(v);
  }
  return out;
}

}  // namespace

TrialResult run_attack_trial(AttackKind kind, std::uint64_t seed, const TrialConfig& cfg) {
  TrialResult r;
  r.kind = kind;
  r.seed = seed;
  const bool on_sgx = kind == AttackKind::ReplayEpcCounter;
  auto model = make_model(attack_sim_config(on_sgx ? ModelKind::SgxClient : ModelKind::SecScale, seed));
  model->register_enclave(1, cfg.vpages);
  model->register_enclave(2, cfg.vpages);
  Driver d(*model, seed, cfg.vpages);
  auto& rng = d.rng();
  Adversary adv;
  Attack a;
  a.kind = kind;
  a.block = static_cast<unsigned>(rng() % kBlocksPerPage);
  a.bit = static_cast<unsigned>(rng());
  int phase = 0;
  try {
    d.background(cfg.warm_ops);
    model->finish();
    std::vector<std::uint64_t> pick;
    if (on_sgx) {
      auto& sgx = dynamic_cast<SgxClientModel&>(*model);
      for (std::uint64_t v = 0; v < cfg.vpages; ++v)
        if (sgx.resident_slot(sgx.translate(1, v))) pick.push_back(v);
    } else {
      pick = evicted_pages(dynamic_cast<SecScaleModel&>(*model).manager(), cfg.vpages);
    }
    if (pick.size() < 2) {
      r.detail = "no eligible target";
      return r;
    }
    std::shuffle(pick.begin(), pick.end(), rng);
    a.vpage = pick[0];
    a.peer_vpage = kind == AttackKind::SpliceRelocate ? pick[1] : rng() % cfg.vpages;

    if (is_replay(kind)) {
      a.snapshot = adv.capture(a, *model);
      // A newer version of the target makes the captured one stale.
      d.op(1, a.vpage, true, a.block);
      if (!on_sgx) dynamic_cast<SecScaleModel&>(*model).manager().flush_page(1, a.vpage);
      model->finish();
    }
    r.mutation = adv.inject(a, *model);
    r.injected = true;
    phase = 1;

    const bool cross = kind == AttackKind::CrossEnclaveRead || kind == AttackKind::CrossEnclaveWrite;
    const EnclaveId victim = cross ? a.attacker : a.enclave;
    const std::uint64_t vpage = cross ? a.peer_vpage : a.vpage;
    d.background(rng() % (cfg.max_gap + 1));
    d.op(victim, vpage, kind == AttackKind::CrossEnclaveWrite, on_sgx ? a.block : static_cast<unsigned>(rng() % 64));
    d.background(rng() % (cfg.max_gap + 1));
    model->syscall(victim);
    phase = 2;
    model->finish();
  } catch (const CatastrophicFailure& f) {
    r.event = f.kind();
    r.detail = f.what();
    r.detected = phase > 0;
    r.before_barrier = phase == 1;
  }
  return r;
}

BenignResult run_benign(ModelKind kind, std::uint64_t ops, std::uint64_t seed, const TrialConfig& cfg) {
  BenignResult r;
  auto model = make_model(attack_sim_config(kind, seed));
  model->register_enclave(1, cfg.vpages);
  model->register_enclave(2, cfg.vpages);
  Driver d(*model, seed, cfg.vpages);
  try {
    while (d.ops() < ops) {
      d.random_op();
      if (d.rng()() % 200 == 0) model->syscall(1 + static_cast<EnclaveId>(d.rng()() % 2));
    }
    model->finish();
  } catch (const CatastrophicFailure& f) {
    ++r.security_events;
    r.first_event = f.what();
  }
  r.operations = d.ops();
  r.read_mismatches = d.mismatches();
  return r;
}

}  // namespace secscale
