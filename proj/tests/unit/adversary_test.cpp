#include "doctest.h"
#include "secscale/adversary.hpp"

using namespace secscale;

TEST_CASE("attack kind names round-trip") {
  for (AttackKind k : kAllAttackKinds) CHECK(parse_attack_kind(to_string(k)) == k);
  CHECK_THROWS(parse_attack_kind("tickle"));
  CHECK(is_replay(AttackKind::ReplayDataMacPair));
  CHECK(!is_replay(AttackKind::TamperData));
}

TEST_CASE("every attack kind is caught before the barrier") {
  for (AttackKind k : kAllAttackKinds) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto r = run_attack_trial(k, seed);
      CAPTURE(to_string(k));
      CAPTURE(seed);
      CHECK(r.injected);
      CHECK(r.detected);
      CHECK(r.before_barrier);
      CHECK(!r.mutation.touched.empty() + r.mutation.page_table > 0);
    }
  }
}

TEST_CASE("benign operation raises nothing") {
  for (ModelKind m : {ModelKind::SecScale, ModelKind::SgxClient}) {
    const auto r = run_benign(m, 3000, 2);
    CHECK(r.operations == 3000);
    CHECK(r.security_events == 0);
    CHECK(r.read_mismatches == 0);
  }
}

TEST_CASE("snapshot and restore are byte exact") {
  const MemoryLayout l(LayoutConfig{16ull << 20, 0, 1ull << 20, 4, 0});
  EmulatedDram d(l);
  const PhysAddr a = page_base(l.eepc_page(0));
  d.poke(a, std::array<std::uint8_t, 2>{1, 2});
  Adversary adv;
  const auto h = adv.snapshot(d, {{a, 2}});
  Adversary::flip_bit(d, a, 0);
  std::array<std::uint8_t, 2> x;
  d.peek(a, x);
  CHECK(x[0] == 0);
  const auto rec = adv.restore(d, h);
  d.peek(a, x);
  CHECK(x == std::array<std::uint8_t, 2>{1, 2});
  CHECK(rec.touched.size() == 1);
}

TEST_CASE("a scripted attack stops the run with a security event") {
  SyntheticSpec s;
  s.footprint = 2 << 20;
  s.accesses = 2000;
  s.read_fraction = 0.5;
  CacheConfig c;
  c.l2_bytes = 32 << 10;
  const auto trace = llc_filter(generate(s), c);
  SimConfig cfg;
  cfg.cache = c;
  auto model = make_model(cfg);
  Adversary adv;
  ScriptedAttack a;
  a.tick = trace.events.size() / 2;
  a.attack.kind = AttackKind::TamperKeySlot;
  a.attack.vpage = 3;
  RunOptions opts;
  opts.before_event = attack_hook(adv, {a});
  const Report r = run_events(*model, trace, opts);
  REQUIRE(r.security_event.has_value());
  CHECK(r.security_event->event_index >= a.tick);
}
