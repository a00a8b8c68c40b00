#include "secscale/workload.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace secscale {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> fields(std::string_view s) {
  std::vector<std::string_view> out;
  while (!s.empty()) {
    const auto start = s.find_first_not_of(" \t");
    if (start == std::string_view::npos) break;
    s.remove_prefix(start);
    const auto end = s.find_first_of(" \t");
    out.push_back(s.substr(0, end));
    if (end == std::string_view::npos) break;
    s.remove_prefix(end);
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out, int base) {
  if (s.empty()) return false;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out, base);
  return ec == std::errc() && p == s.data() + s.size();
}

bool has_gz_extension(const std::filesystem::path& path) { return path.extension() == ".gz"; }

double unit_double(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

std::vector<TraceRecord> parse_trace(std::istream& in) {
  std::vector<TraceRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = line;
    if (auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto f = fields(s);
    if (f.size() != 4) throw ParseError(lineno, "expected `<R|W|S> <hex vaddr> <enclave> <icount>`");
    TraceRecord r;
    if (f[0] == "R")
      r.op = Op::Read;
    else if (f[0] == "W")
      r.op = Op::Write;
    else if (f[0] == "S")
      r.op = Op::Syscall;
    else
      throw ParseError(lineno, "unknown op `" + std::string(f[0]) + "`");
    std::string_view hex = f[1];
    if (hex.size() > 2 && hex[0] == '0' && (hex[1] == 'x' || hex[1] == 'X')) hex.remove_prefix(2);
    if (!parse_number(hex, r.vaddr, 16)) throw ParseError(lineno, "bad hex address `" + std::string(f[1]) + "`");
    if (!parse_number(f[2], r.enclave, 10)) throw ParseError(lineno, "bad enclave id `" + std::string(f[2]) + "`");
    if (!parse_number(f[3], r.icount, 10)) throw ParseError(lineno, "bad icount `" + std::string(f[3]) + "`");
    if (!out.empty() && r.icount < out.back().icount) throw ParseError(lineno, "icount decreases");
    out.push_back(r);
  }
  return out;
}

std::vector<TraceRecord> read_trace_file(const std::filesystem::path& path) {
  if (!has_gz_extension(path)) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trace " + path.string());
    return parse_trace(in);
  }
  gzFile gz = gzopen(path.string().c_str(), "rb");
  if (!gz) throw std::runtime_error("cannot open trace " + path.string());
  std::string text;
  char buf[1 << 16];
  int n = 0;
  while ((n = gzread(gz, buf, sizeof buf)) > 0) text.append(buf, static_cast<std::size_t>(n));
  const bool failed = n < 0;
  gzclose(gz);
  if (failed) throw std::runtime_error("corrupt gzip trace " + path.string());
  std::istringstream in(text);
  return parse_trace(in);
}

void write_trace(std::ostream& out, const std::vector<TraceRecord>& records) {
  char buf[96];
  for (const auto& r : records) {
    const char op = r.op == Op::Read ? 'R' : r.op == Op::Write ? 'W' : 'S';
    const int n = std::snprintf(buf, sizeof buf, "%c 0x%llx %u %llu\n", op, static_cast<unsigned long long>(r.vaddr),
                                r.enclave, static_cast<unsigned long long>(r.icount));
    out.write(buf, n);
  }
}

void write_trace_file(const std::filesystem::path& path, const std::vector<TraceRecord>& records) {
  std::ostringstream text;
  write_trace(text, records);
  const std::string s = text.str();
  if (!has_gz_extension(path)) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << s;
    return;
  }
  gzFile gz = gzopen(path.string().c_str(), "wb");
  if (!gz) throw std::runtime_error("cannot write " + path.string());
  const int n = gzwrite(gz, s.data(), static_cast<unsigned>(s.size()));
  gzclose(gz);
  if (n != static_cast<int>(s.size())) throw std::runtime_error("gzip write failed for " + path.string());
}

std::string_view to_string(Pattern p) {
  switch (p) {
    case Pattern::Sequential: return "sequential";
    case Pattern::Uniform: return "uniform";
    case Pattern::Zipf: return "zipf";
    case Pattern::Strided: return "strided";
    case Pattern::PointerChase: return "pointer-chase";
  }
  return "?";
}

Pattern parse_pattern(std::string_view name) {
  for (auto p : {Pattern::Sequential, Pattern::Uniform, Pattern::Zipf, Pattern::Strided, Pattern::PointerChase})
    if (to_string(p) == name) return p;
  throw ConfigError("workload.pattern", "unknown pattern `" + std::string(name) + "`");
}

void SyntheticSpec::validate() const {
  if (footprint < kPageSize) throw ConfigError("workload.footprint", "must be at least one page");
  if (footprint % kBlockSize) throw ConfigError("workload.footprint", "must be a multiple of 64");
  if (read_fraction < 0.0 || read_fraction > 1.0) throw ConfigError("workload.read_fraction", "must be in [0, 1]");
  if (!(accesses_per_instruction > 0.0) || accesses_per_instruction > 1.0)
    throw ConfigError("workload.accesses_per_instruction", "must be in (0, 1]");
  if (pattern == Pattern::Zipf && !(zipf_s > 0.0)) throw ConfigError("workload.zipf_s", "must be positive");
  if (pattern == Pattern::Strided && (stride == 0 || stride % kBlockSize))
    throw ConfigError("workload.stride", "must be a positive multiple of 64");
  if (enclave == 0) throw ConfigError("workload.enclave", "enclave ids start at 1");
}

std::vector<TraceRecord> generate(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const std::uint64_t lines = spec.footprint / kBlockSize;
  const std::uint64_t pages = (spec.footprint + kPageSize - 1) / kPageSize;

  std::vector<double> zipf_cdf;
  if (spec.pattern == Pattern::Zipf) {
    zipf_cdf.resize(pages);
    double sum = 0;
    for (std::uint64_t r = 0; r < pages; ++r) zipf_cdf[r] = sum += 1.0 / std::pow(static_cast<double>(r + 1), spec.zipf_s);
    for (auto& c : zipf_cdf) c /= sum;
  }
  std::vector<std::uint32_t> chase;
  std::uint64_t cursor = 0;
  if (spec.pattern == Pattern::PointerChase) {
    // Sattolo's algorithm: one cycle through every line.
    chase.resize(lines);
    std::iota(chase.begin(), chase.end(), 0u);
    for (std::uint64_t i = lines - 1; i > 0; --i) std::swap(chase[i], chase[rng() % i]);
  }

  std::vector<TraceRecord> out;
  out.reserve(spec.accesses + (spec.syscall_every ? spec.accesses / spec.syscall_every : 0));
  for (std::uint64_t i = 0; i < spec.accesses; ++i) {
    std::uint64_t line = 0;
    switch (spec.pattern) {
      case Pattern::Sequential: line = i % lines; break;
      case Pattern::Uniform: line = rng() % lines; break;
      case Pattern::Zipf: {
        const double u = unit_double(rng);
        const auto rank = static_cast<std::uint64_t>(std::lower_bound(zipf_cdf.begin(), zipf_cdf.end(), u) - zipf_cdf.begin());
        const std::uint64_t page = std::min(rank, pages - 1);
        line = std::min(page * kBlocksPerPage + rng() % kBlocksPerPage, lines - 1);
        break;
      }
      case Pattern::Strided: line = (i * (spec.stride / kBlockSize)) % lines; break;
      case Pattern::PointerChase:
        cursor = chase[cursor];
        line = cursor;
        break;
    }
    TraceRecord r;
    r.op = unit_double(rng) < spec.read_fraction ? Op::Read : Op::Write;
    r.enclave = spec.enclave;
    r.vaddr = line * kBlockSize + 8 * (rng() % 8);
    r.icount = static_cast<std::uint64_t>(std::floor(static_cast<double>(i + 1) / spec.accesses_per_instruction));
    out.push_back(r);
    if (spec.syscall_every && (i + 1) % spec.syscall_every == 0)
      out.push_back(TraceRecord{Op::Syscall, spec.enclave, 0, r.icount});
  }
  return out;
}

CacheLevel::CacheLevel(std::uint64_t size_bytes, unsigned ways) : ways_(ways) {
  if (ways == 0 || size_bytes < ways * kBlockSize || size_bytes % (ways * kBlockSize))
    throw ConfigError("cache", "size must be a positive multiple of ways * 64");
  sets_ = size_bytes / (ways * kBlockSize);
  lines_.resize(sets_ * ways_);
}

CacheLevel::Result CacheLevel::access(std::uint64_t key, bool make_dirty) {
  Way* set = &lines_[(key % sets_) * ways_];
  Result r;
  Way* victim = set;
  for (unsigned w = 0; w < ways_; ++w) {
    if (set[w].valid && set[w].key == key) {
      set[w].lru = ++clock_;
      set[w].dirty |= make_dirty;
      ++hits_;
      r.hit = true;
      return r;
    }
    if (!set[w].valid) {
      if (victim->valid) victim = &set[w];
    } else if (victim->valid && set[w].lru < victim->lru) {
      victim = &set[w];
    }
  }
  ++misses_;
  if (victim->valid) {
    r.evicted = victim->key;
    r.evicted_dirty = victim->dirty;
  }
  *victim = Way{key, ++clock_, true, make_dirty};
  return r;
}

bool CacheLevel::contains(std::uint64_t key) const {
  const Way* set = &lines_[(key % sets_) * ways_];
  for (unsigned w = 0; w < ways_; ++w)
    if (set[w].valid && set[w].key == key) return true;
  return false;
}

std::vector<std::uint64_t> CacheLevel::take_dirty() {
  std::vector<std::uint64_t> out;
  for (auto& w : lines_) {
    if (w.valid && w.dirty) {
      out.push_back(w.key);
      w.valid = false;
    }
  }
  return out;
}

FilteredTrace llc_filter(const std::vector<TraceRecord>& records, const CacheConfig& cfg) {
  CacheLevel l1(cfg.l1_bytes, cfg.l1_ways);
  CacheLevel l2(cfg.l2_bytes, cfg.l2_ways);
  FilteredTrace out;
  std::unordered_map<std::uint64_t, Block> current;  // what the program sees
  std::unordered_map<std::uint64_t, Block> memory;   // what memory should hold
  const auto value = [](const std::unordered_map<std::uint64_t, Block>& m, std::uint64_t key) {
    auto it = m.find(key);
    return it == m.end() ? Block{} : it->second;
  };
  const auto event = [&](MemEvent::Kind kind, std::uint64_t key, std::uint64_t icount) {
    MemEvent e;
    e.kind = kind;
    e.enclave = static_cast<EnclaveId>(key >> 34);
    e.vaddr = (key & ((std::uint64_t{1} << 34) - 1)) * kBlockSize;
    e.icount = icount;
    if (kind == MemEvent::Kind::Writeback) {
      e.data = value(current, key);
      memory[key] = e.data;
      ++out.stats.writebacks;
    } else {
      e.data = value(memory, key);
    }
    out.events.push_back(e);
  };
  // L2 receives a dirty line from L1 (or a fill); its own victim may need writing back.
  const auto l2_insert = [&](std::uint64_t key, bool dirty, std::uint64_t icount) {
    const auto r = l2.access(key, dirty);
    if (r.evicted && r.evicted_dirty) event(MemEvent::Kind::Writeback, *r.evicted, icount);
    return r.hit;
  };

  for (const auto& rec : records) {
    out.stats.final_icount = rec.icount;
    if (rec.op == Op::Syscall) {
      MemEvent e;
      e.kind = MemEvent::Kind::Syscall;
      e.enclave = rec.enclave;
      e.icount = rec.icount;
      out.events.push_back(e);
      ++out.stats.syscalls;
      continue;
    }
    ++out.stats.accesses;
    const std::uint64_t key = line_key(rec.enclave, rec.vaddr);
    const bool write = rec.op == Op::Write;
    const auto r1 = l1.access(key, write);
    if (r1.hit) {
      ++out.stats.l1_hits;
    } else {
      ++out.stats.l1_misses;
      // Non-inclusive: probe L2 without allocating, fill from memory on a miss.
      if (l2.contains(key)) {
        l2.access(key, false);
        ++out.stats.l2_hits;
      } else {
        ++out.stats.llc_misses;
        event(MemEvent::Kind::Fill, key, rec.icount);
        l2_insert(key, false, rec.icount);
      }
      if (r1.evicted && r1.evicted_dirty) l2_insert(*r1.evicted, true, rec.icount);
    }
    if (write) {
      Block& b = current[key];
      const std::uint64_t off = rec.vaddr % kBlockSize & ~std::uint64_t{7};
      for (int i = 0; i < 8; ++i) b[off + i] = static_cast<std::uint8_t>(rec.icount >> (8 * i));
    }
  }
  out.flush_begin = out.events.size();
  for (auto key : l1.take_dirty()) l2_insert(key, true, out.stats.final_icount);
  for (auto key : l2.take_dirty()) event(MemEvent::Kind::Writeback, key, out.stats.final_icount);
  return out;
}

}  // namespace secscale
