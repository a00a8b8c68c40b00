#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "secscale/common.hpp"

namespace secscale {

struct LatencyConfig {
  Cycle dram_access_cycles = 100;
  // Per-access cost of streamed DRAM traffic issued by background engines.
  Cycle dram_burst_cycles = 4;
  Cycle ctr_crypt_cycles = 40;
  Cycle ecb_crypt_cycles = 40;
  Cycle mac_compute_cycles = 40;
  Cycle sgx_fault_penalty = 40000;
  Cycle enclave_enter_exit = 30000;
  Cycle penglai_mmt_miss_penalty = 300;
  Cycle instruction_cycles = 1;
  // SHA-2 engine: 40 Gbit/s at the 3.6 GHz core clock.
  double mvc_bytes_per_cycle = 40e9 / 8 / 3.6e9;
  // Throughput of the pipelined AES units used by background block transfers.
  double aes_bytes_per_cycle = 16.0;
  double core_clock_ghz = 3.6;

  void validate() const;
};

enum class Event : std::uint8_t {
  DramAccess,
  DramBurst,
  CtrCrypt,
  EcbCrypt,
  MacCompute,
  SgxFault,
  EnclaveEnterExit,
  PenglaiRootMiss,
  Instruction,
};
inline constexpr std::size_t kEventCount = 9;

std::string_view to_string(Event e);
// Throws ConfigError for unknown names.
Event parse_event(std::string_view name);

// Critical path plus background lanes. Work on a lane starts once the lane is
// free and its inputs are ready; it is only visible when the core waits on it.
enum class Lane : std::uint8_t { Transfer, Verify, Prefetch };
inline constexpr std::size_t kLaneCount = 3;

std::string_view to_string(Lane l);

struct CycleStats {
  Cycle critical = 0;  // current time of the critical path
  Cycle stall = 0;     // part of `critical` spent waiting for lanes
  std::array<Cycle, kLaneCount> lane_busy{};
  std::array<std::uint64_t, kEventCount> events{};
  std::uint64_t instructions = 0;

  Cycle background() const {
    Cycle n = 0;
    for (auto c : lane_busy) n += c;
    return n;
  }
};

class TimingModel {
 public:
  explicit TimingModel(const LatencyConfig& cfg = {});

  Cycle cost(Event e, std::uint64_t count = 1) const;
  // Pipelined cost of `ops` 64-byte AES operations issued back to back.
  Cycle stream_crypto_cycles(unsigned ops) const;
  // Serializes on the critical path.
  void charge(Event e, std::uint64_t count = 1);
  // Queues on a lane once it is free and the work is ready (default: now);
  // returns the completion time.
  Cycle charge(Lane lane, Event e, std::uint64_t count = 1, std::optional<Cycle> ready_at = std::nullopt);
  Cycle charge_cycles(Lane lane, Cycle cycles, std::optional<Cycle> ready_at = std::nullopt);

  void retire_instructions(std::uint64_t n);
  // Blocks the critical path until `t`; returns stall cycles.
  Cycle wait_until(Cycle t);
  Cycle wait_for(Lane lane) { return wait_until(lane_free_[static_cast<std::size_t>(lane)]); }
  Cycle drain();

  Cycle now() const { return stats_.critical; }
  Cycle lane_free(Lane lane) const { return lane_free_[static_cast<std::size_t>(lane)]; }
  Cycle total_cycles() const;
  std::uint64_t instructions() const { return stats_.instructions; }
  const CycleStats& stats() const { return stats_; }
  const LatencyConfig& config() const { return cfg_; }

 private:
  LatencyConfig cfg_;
  CycleStats stats_;
  std::array<Cycle, kLaneCount> lane_free_{};
};

}  // namespace secscale
