#include "secscale/timing_model.hpp"

#include <algorithm>
#include <cmath>

namespace secscale {

namespace {

constexpr std::array<std::string_view, kEventCount> kEventNames{
    "dram_access", "dram_burst", "ctr_crypt", "ecb_crypt",   "mac_compute",
    "sgx_fault",   "enclave_enter_exit", "penglai_root_miss", "instruction",
};

}  // namespace

void LatencyConfig::validate() const {
  if (mvc_bytes_per_cycle <= 0) throw ConfigError("latency.mvc_bytes_per_cycle", "must be > 0");
  if (aes_bytes_per_cycle <= 0) throw ConfigError("latency.aes_bytes_per_cycle", "must be > 0");
  if (core_clock_ghz <= 0) throw ConfigError("latency.core_clock_ghz", "must be > 0");
}

std::string_view to_string(Event e) { return kEventNames[static_cast<std::size_t>(e)]; }

Event parse_event(std::string_view name) {
  for (std::size_t i = 0; i < kEventNames.size(); ++i)
    if (kEventNames[i] == name) return static_cast<Event>(i);
  throw ConfigError("", "unknown timing event '" + std::string(name) + "'");
}

std::string_view to_string(Lane l) {
  switch (l) {
    case Lane::Transfer: return "transfer";
    case Lane::Verify: return "verify";
    case Lane::Prefetch: return "prefetch";
  }
  return "?";
}

TimingModel::TimingModel(const LatencyConfig& cfg) : cfg_(cfg) { cfg_.validate(); }

Cycle TimingModel::cost(Event e, std::uint64_t count) const {
  Cycle unit = 0;
  switch (e) {
    case Event::DramAccess: unit = cfg_.dram_access_cycles; break;
    case Event::DramBurst: unit = cfg_.dram_burst_cycles; break;
    case Event::CtrCrypt: unit = cfg_.ctr_crypt_cycles; break;
    case Event::EcbCrypt: unit = cfg_.ecb_crypt_cycles; break;
    case Event::MacCompute: unit = cfg_.mac_compute_cycles; break;
    case Event::SgxFault: unit = cfg_.sgx_fault_penalty; break;
    case Event::EnclaveEnterExit: unit = cfg_.enclave_enter_exit; break;
    case Event::PenglaiRootMiss: unit = cfg_.penglai_mmt_miss_penalty; break;
    case Event::Instruction: unit = cfg_.instruction_cycles; break;
  }
  return unit * count;
}

void TimingModel::charge(Event e, std::uint64_t count) {
  stats_.events[static_cast<std::size_t>(e)] += count;
  stats_.critical += cost(e, count);
}

Cycle TimingModel::charge(Lane lane, Event e, std::uint64_t count, std::optional<Cycle> ready_at) {
  stats_.events[static_cast<std::size_t>(e)] += count;
  return charge_cycles(lane, cost(e, count), ready_at);
}

Cycle TimingModel::charge_cycles(Lane lane, Cycle cycles, std::optional<Cycle> ready_at) {
  auto& free = lane_free_[static_cast<std::size_t>(lane)];
  const Cycle start = std::max(free, ready_at.value_or(stats_.critical));
  free = start + cycles;
  stats_.lane_busy[static_cast<std::size_t>(lane)] += cycles;
  return free;
}

Cycle TimingModel::stream_crypto_cycles(unsigned ops) const {
  return static_cast<Cycle>(std::ceil(ops * static_cast<double>(kBlockSize) / cfg_.aes_bytes_per_cycle));
}

void TimingModel::retire_instructions(std::uint64_t n) {
  stats_.instructions += n;
  charge(Event::Instruction, n);
}

Cycle TimingModel::wait_until(Cycle t) {
  if (t <= stats_.critical) return 0;
  const Cycle s = t - stats_.critical;
  stats_.stall += s;
  stats_.critical = t;
  return s;
}

Cycle TimingModel::drain() {
  return wait_until(*std::max_element(lane_free_.begin(), lane_free_.end()));
}

Cycle TimingModel::total_cycles() const {
  return std::max(stats_.critical, *std::max_element(lane_free_.begin(), lane_free_.end()));
}

}  // namespace secscale
