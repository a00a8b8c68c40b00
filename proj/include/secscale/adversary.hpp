#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "secscale/address_space.hpp"
#include "secscale/sim.hpp"

namespace secscale {

enum class AttackKind : std::uint8_t {
  TamperData,
  TamperLeafMac,
  TamperForestNode,
  TamperKeySlot,
  ReplayDataMacPair,
  ReplayKeyMacPair,
  SpliceRelocate,
  CrossEnclaveRead,
  CrossEnclaveWrite,
  ReplayEpcCounter,
};

inline constexpr std::array<AttackKind, 10> kAllAttackKinds{
    AttackKind::TamperData,        AttackKind::TamperLeafMac,     AttackKind::TamperForestNode,
    AttackKind::TamperKeySlot,     AttackKind::ReplayDataMacPair, AttackKind::ReplayKeyMacPair,
    AttackKind::SpliceRelocate,    AttackKind::CrossEnclaveRead,  AttackKind::CrossEnclaveWrite,
    AttackKind::ReplayEpcCounter,
};

std::string_view to_string(AttackKind k);
AttackKind parse_attack_kind(std::string_view name);
bool is_replay(AttackKind k);

struct Attack {
  AttackKind kind = AttackKind::TamperData;
  EnclaveId enclave = 1;  // owner of the target page
  std::uint64_t vpage = 0;
  // SpliceRelocate: page whose contents are copied over the target.
  // Cross-enclave kinds: the attacker's virtual page remapped onto the target.
  std::uint64_t peer_vpage = 0;
  EnclaveId attacker = 2;
  unsigned block = 0;
  unsigned bit = 0;
  // Replay kinds: handle returned by Adversary::capture.
  std::optional<std::size_t> snapshot;
};

struct ByteRange {
  PhysAddr addr;
  std::vector<std::uint8_t> bytes;
};

// Byte-exact copy of DRAM ranges, held outside the simulated system.
struct Snapshot {
  std::vector<ByteRange> ranges;
};

struct MutationRecord {
  AttackKind kind{};
  std::vector<std::pair<PhysAddr, std::size_t>> touched;
  bool page_table = false;  // an OS page-table entry was rewritten
};

// The attacker: reads and writes DRAM without going through any protection,
// and controls the OS page table. It cannot touch TCB state.
class Adversary {
 public:
  std::size_t snapshot(const EmulatedDram& dram, std::vector<std::pair<PhysAddr, std::size_t>> ranges);
  const Snapshot& snapshot_at(std::size_t handle) const { return snapshots_.at(handle); }
  MutationRecord restore(EmulatedDram& dram, std::size_t handle);
  static void flip_bit(EmulatedDram& dram, PhysAddr addr, unsigned bit);

  // Records the state a replay kind will put back later.
  std::size_t capture(const Attack& a, MemorySystem& model);
  // Requires a quiescent model.
  MutationRecord inject(const Attack& a, MemorySystem& model);

 private:
  std::vector<Snapshot> snapshots_;
};

// One entry of an attack script: the attack is applied before event `tick`;
// replay kinds capture their snapshot before `capture_tick`.
struct ScriptedAttack {
  std::size_t tick = 0;
  std::optional<std::size_t> capture_tick;
  Attack attack;
};

// A step hook that quiesces the model and applies the script.
StepHook attack_hook(Adversary& adv, std::vector<ScriptedAttack> script);

struct TrialConfig {
  std::uint64_t vpages = 48;  // per enclave
  std::uint64_t warm_ops = 160;
  std::uint64_t max_gap = 8;  // benign ops before and after the victim access
};

struct TrialResult {
  AttackKind kind{};
  std::uint64_t seed = 0;
  bool injected = false;
  bool detected = false;
  bool before_barrier = false;
  std::optional<SecurityEventKind> event;
  std::string detail;
  MutationRecord mutation;
};

// Desk geometry used by the attack trials.
SimConfig attack_sim_config(ModelKind model, std::uint64_t seed);

// Random benign background on two enclaves, one attack at a random eligible
// target, a victim access, then a system call.
TrialResult run_attack_trial(AttackKind kind, std::uint64_t seed, const TrialConfig& cfg = {});

struct BenignResult {
  std::uint64_t operations = 0;
  std::uint64_t security_events = 0;
  std::uint64_t read_mismatches = 0;
  std::optional<std::string> first_event;
};

// Random reads, writes and system calls on two enclaves, checked against a plain reference.
BenignResult run_benign(ModelKind model, std::uint64_t ops, std::uint64_t seed, const TrialConfig& cfg = {});

}  // namespace secscale
