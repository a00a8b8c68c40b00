#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "secscale/common.hpp"

namespace secscale {

// `S` records are an extension: a system call, i.e. a barrier for pending verification.
enum class Op : std::uint8_t { Read, Write, Syscall };

struct TraceRecord {
  Op op = Op::Read;
  EnclaveId enclave = 1;
  std::uint64_t vaddr = 0;
  std::uint64_t icount = 0;

  bool operator==(const TraceRecord&) const = default;
};

std::vector<TraceRecord> parse_trace(std::istream& in);
// Transparently inflates files ending in ".gz".
std::vector<TraceRecord> read_trace_file(const std::filesystem::path& path);
void write_trace(std::ostream& out, const std::vector<TraceRecord>& records);
void write_trace_file(const std::filesystem::path& path, const std::vector<TraceRecord>& records);

enum class Pattern : std::uint8_t { Sequential, Uniform, Zipf, Strided, PointerChase };
std::string_view to_string(Pattern p);
Pattern parse_pattern(std::string_view name);

struct SyntheticSpec {
  Pattern pattern = Pattern::Uniform;
  double zipf_s = 1.0;
  std::uint64_t stride = 4096;  // bytes, for Strided
  std::uint64_t footprint = 1ull << 20;
  double read_fraction = 0.7;
  std::uint64_t accesses = 10000;
  double accesses_per_instruction = 0.01;
  std::uint64_t seed = 1;
  EnclaveId enclave = 1;
  // Emit a syscall record after every n accesses; 0 disables.
  std::uint64_t syscall_every = 0;

  void validate() const;
};

std::vector<TraceRecord> generate(const SyntheticSpec& spec);

// Tag-only set-associative cache with LRU replacement.
class CacheLevel {
 public:
  CacheLevel(std::uint64_t size_bytes, unsigned ways);

  struct Result {
    bool hit = false;
    std::optional<std::uint64_t> evicted;  // key of the victim line
    bool evicted_dirty = false;
  };
  Result access(std::uint64_t key, bool make_dirty);
  bool contains(std::uint64_t key) const;
  // Removes every dirty line, returning their keys in set order.
  std::vector<std::uint64_t> take_dirty();

  std::uint64_t sets() const { return sets_; }
  unsigned ways() const { return ways_; }
  std::uint64_t hits() const { return hits_; }
  std::uint64_t misses() const { return misses_; }

 private:
  struct Way {
    std::uint64_t key = 0;
    std::uint64_t lru = 0;
    bool valid = false;
    bool dirty = false;
  };
  std::uint64_t sets_;
  unsigned ways_;
  std::vector<Way> lines_;
  std::uint64_t clock_ = 0;
  std::uint64_t hits_ = 0;
  std::uint64_t misses_ = 0;
};

struct CacheConfig {
  std::uint64_t l1_bytes = 32 << 10;
  unsigned l1_ways = 8;
  std::uint64_t l2_bytes = 8 << 20;
  unsigned l2_ways = 8;
};

// What the protected memory sees.
struct MemEvent {
  enum class Kind : std::uint8_t { Fill, Writeback, Syscall };
  Kind kind = Kind::Fill;
  EnclaveId enclave = 1;
  std::uint64_t vaddr = 0;  // line aligned
  std::uint64_t icount = 0;
  // Writeback: data written. Fill: contents memory must return.
  Block data{};
};

struct CacheStats {
  std::uint64_t accesses = 0;
  std::uint64_t l1_hits = 0;
  std::uint64_t l1_misses = 0;
  std::uint64_t l2_hits = 0;
  std::uint64_t llc_misses = 0;
  std::uint64_t writebacks = 0;
  std::uint64_t syscalls = 0;
  std::uint64_t final_icount = 0;
};

struct FilteredTrace {
  std::vector<MemEvent> events;
  CacheStats stats;
  // Events from here on write back the caches after the last record.
  std::size_t flush_begin = 0;
};

// Runs L1 and a shared, non-inclusive L2 and emits LLC fills and dirty
// write-backs. A write stores its 8-byte icount at vaddr & ~7, which gives
// every line a known expected value. Dirty lines are flushed at the end.
FilteredTrace llc_filter(const std::vector<TraceRecord>& records, const CacheConfig& cfg = {});

// Cache key for a line of an enclave's virtual space.
inline std::uint64_t line_key(EnclaveId enclave, std::uint64_t vaddr) {
  return (std::uint64_t{enclave} << 34) | (vaddr / kBlockSize);
}

}  // namespace secscale
