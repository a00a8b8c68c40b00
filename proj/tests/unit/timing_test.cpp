#include "doctest.h"
#include "secscale/timing_model.hpp"

using namespace secscale;

TEST_CASE("critical charges serialize") {
  TimingModel t;
  t.charge(Event::DramAccess);
  t.charge(Event::MacCompute, 2);
  CHECK(t.now() == 100 + 80);
  CHECK(t.stats().events[static_cast<std::size_t>(Event::MacCompute)] == 2);
  t.retire_instructions(50);
  CHECK(t.now() == 230);
  CHECK(t.instructions() == 50);
}

TEST_CASE("lanes overlap the critical path until the core waits") {
  TimingModel t;
  const Cycle done = t.charge(Lane::Transfer, Event::DramAccess, 3);
  CHECK(done == 300);
  CHECK(t.now() == 0);
  // The lane is busy, so the next piece of work queues behind it.
  CHECK(t.charge(Lane::Transfer, Event::DramAccess) == 400);
  // A different lane is independent but honours readiness.
  CHECK(t.charge(Lane::Verify, Event::MacCompute, 1, Cycle{1000}) == 1040);
  t.retire_instructions(100);
  CHECK(t.wait_for(Lane::Transfer) == 300);
  CHECK(t.stats().stall == 300);
  CHECK(t.now() == 400);
  t.drain();
  CHECK(t.now() == 1040);
  CHECK(t.total_cycles() == 1040);
  CHECK(t.stats().lane_busy[static_cast<std::size_t>(Lane::Transfer)] == 400);
}

TEST_CASE("waiting for the past costs nothing") {
  TimingModel t;
  t.charge(Event::SgxFault);
  CHECK(t.wait_until(10) == 0);
  CHECK(t.now() == 40000);
}

TEST_CASE("event names round-trip") {
  for (std::size_t i = 0; i < kEventCount; ++i) {
    const auto e = static_cast<Event>(i);
    CHECK(parse_event(to_string(e)) == e);
  }
  CHECK_THROWS_AS(parse_event("warp-drive"), ConfigError);
}

TEST_CASE("latency config rejects nonsense") {
  LatencyConfig c;
  CHECK_NOTHROW(c.validate());
  c.mvc_bytes_per_cycle = 0;
  CHECK_THROWS(c.validate());
  c = {};
  CHECK(TimingModel(c).stream_crypto_cycles(64) < 64 * c.ecb_crypt_cycles);
}
