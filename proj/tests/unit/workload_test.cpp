#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "secscale/workload.hpp"

using namespace secscale;

TEST_CASE("trace text parses, skips comments and round-trips") {
  std::istringstream in("# header\nR 0x1000 1 10\nW 2040 2 12  # note\n\nS 0 1 20\n");
  const auto t = parse_trace(in);
  REQUIRE(t.size() == 3);
  CHECK(t[0] == TraceRecord{Op::Read, 1, 0x1000, 10});
  CHECK(t[1] == TraceRecord{Op::Write, 2, 0x2040, 12});
  CHECK(t[2].op == Op::Syscall);
  std::ostringstream out;
  write_trace(out, t);
  std::istringstream back(out.str());
  CHECK(parse_trace(back) == t);
}

TEST_CASE("trace errors carry the line number") {
  auto bad = [](const std::string& s) {
    std::istringstream in(s);
    try {
      parse_trace(in);
    } catch (const ParseError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  CHECK(bad("R 0x10 1 5\nX 0x10 1 6\n") == 2);
  CHECK(bad("R zz 1 5\n") == 1);
  CHECK(bad("R 0x10 1 5\nR 0x10 1 4\n") == 2);
  CHECK(bad("R 0x10 1\n") == 1);
}

TEST_CASE("gzip trace files round-trip") {
  SyntheticSpec s;
  s.accesses = 500;
  const auto t = generate(s);
  const auto dir = std::filesystem::temp_directory_path();
  const auto gz = dir / "secscale_unit_trace.txt.gz";
  const auto plain = dir / "secscale_unit_trace.txt";
  write_trace_file(gz, t);
  write_trace_file(plain, t);
  CHECK(read_trace_file(gz) == t);
  CHECK(read_trace_file(plain) == t);
  CHECK(std::filesystem::file_size(gz) < std::filesystem::file_size(plain));
  std::filesystem::remove(gz);
  std::filesystem::remove(plain);
}

TEST_CASE("synthetic traces are deterministic and stay in the footprint") {
  for (Pattern p : {Pattern::Sequential, Pattern::Uniform, Pattern::Zipf, Pattern::Strided, Pattern::PointerChase}) {
    SyntheticSpec s;
    s.pattern = p;
    s.footprint = 256 << 10;
    s.accesses = 2000;
    s.syscall_every = 100;
    const auto a = generate(s);
    CHECK(a == generate(s));
    std::size_t syscalls = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].op == Op::Syscall) {
        ++syscalls;
        continue;
      }
      CHECK(a[i].vaddr < s.footprint);
      if (i) CHECK(a[i].icount >= a[i - 1].icount);
    }
    CHECK(syscalls == 20);
    CHECK(parse_pattern(to_string(p)) == p);
    s.seed = 2;
    if (p != Pattern::Sequential && p != Pattern::Strided) CHECK(generate(s) != a);
  }
}

TEST_CASE("zipf concentrates on few pages") {
  SyntheticSpec s;
  s.pattern = Pattern::Zipf;
  s.footprint = 4 << 20;
  s.accesses = 5000;
  std::map<std::uint64_t, int> hits;
  for (const auto& r : generate(s)) ++hits[r.vaddr / kPageSize];
  int top = 0;
  for (auto [p, n] : hits) top = std::max(top, n);
  CHECK(top > 5000 / 100);
}

TEST_CASE("cache level is set-associative lru with dirty victims") {
  CacheLevel c(2 * 64 * 2, 2);  // 2 sets, 2 ways
  CHECK(c.sets() == 2);
  CHECK(!c.access(0, true).hit);
  CHECK(!c.access(2, false).hit);
  CHECK(c.access(0, false).hit);
  const auto r = c.access(4, false);  // evicts key 2, the LRU line of set 0
  REQUIRE(r.evicted.has_value());
  CHECK(*r.evicted == 2);
  CHECK(!r.evicted_dirty);
  const auto r2 = c.access(6, false);
  CHECK(*r2.evicted == 0);
  CHECK(r2.evicted_dirty);
  c.access(1, true);
  CHECK(c.take_dirty() == std::vector<std::uint64_t>{1});
  CHECK(c.contains(1) == false);
}

TEST_CASE("llc filter emits fills, write-backs and a final flush") {
  std::vector<TraceRecord> t;
  for (std::uint64_t i = 0; i < 64; ++i) t.push_back({Op::Write, 1, i * 64, i + 1});
  t.push_back({Op::Syscall, 1, 0, 100});
  for (std::uint64_t i = 0; i < 64; ++i) t.push_back({Op::Read, 1, i * 64, 101 + i});
  CacheConfig cfg;
  cfg.l1_bytes = 1024;
  cfg.l1_ways = 2;
  cfg.l2_bytes = 2048;
  cfg.l2_ways = 2;
  const auto f = llc_filter(t, cfg);
  CHECK(f.stats.accesses == 128);
  CHECK(f.stats.syscalls == 1);
  std::size_t fills = 0, wbs = 0, sys = 0;
  for (std::size_t i = 0; i < f.events.size(); ++i) {
    const auto& e = f.events[i];
    fills += e.kind == MemEvent::Kind::Fill;
    wbs += e.kind == MemEvent::Kind::Writeback;
    sys += e.kind == MemEvent::Kind::Syscall;
    if (i >= f.flush_begin) CHECK(e.kind == MemEvent::Kind::Writeback);
    if (e.kind == MemEvent::Kind::Writeback) {
      // A write stores its icount at the written address.
      std::uint64_t v = 0;
      for (int k = 7; k >= 0; --k) v = (v << 8) | e.data[k];
      CHECK(v == e.vaddr / 64 + 1);
    }
  }
  CHECK(sys == 1);
  CHECK(fills == f.stats.llc_misses);
  CHECK(wbs == 64);
  CHECK(f.flush_begin <= f.events.size());
}

TEST_CASE("synthetic spec validation") {
  SyntheticSpec s;
  s.footprint = 0;
  CHECK_THROWS(s.validate());
  s = {};
  s.read_fraction = 1.5;
  CHECK_THROWS(s.validate());
  CHECK_THROWS(parse_pattern("spiral"));
}
