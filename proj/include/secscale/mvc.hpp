#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <vector>

#include "secscale/mac_forest.hpp"
#include "secscale/timing_model.hpp"

namespace secscale {

struct VerificationJob {
  struct Page {
    PageNum page;
    PageKey key;
    std::shared_ptr<const PageBytes> bytes;
  };
  // One page, or two pages of one subtree region verified together.
  std::vector<Page> pages;
  Cycle ready_at = 0;
  std::uint64_t instructions_at_enqueue = 0;
};

struct MvcConfig {
  bool deferred = true;
  // Merge a job into the queued tail when both sit in one subtree region.
  bool grouping = true;
  // 0 means unbounded.
  std::size_t max_outstanding = 0;
};

struct RetiredJob {
  std::vector<PageNum> pages;
  Cycle finished = 0;
  unsigned forest_accesses = 0;
  bool cache_hit = false;
};

// Deferred MAC verification: a FIFO consumed on the verify lane at a fixed
// hashing rate. Retiring a job runs the forest check.
class Mvc {
 public:
  Mvc(MacForest& forest, TimingModel& timing, const MvcConfig& cfg = {});

  // Called with the region before every forest check.
  void set_pre_verify_hook(std::function<void(std::uint64_t region)> hook) { hook_ = std::move(hook); }

  // Returns the queue depth after enqueueing. In blocking mode the job retires here.
  std::size_t enqueue(VerificationJob job);
  // Grants `cycles` more verify-lane time and retires what fits.
  std::vector<RetiredJob> tick(Cycle cycles);
  // Retires jobs whose hashing completes by `t`.
  std::vector<RetiredJob> advance_to(Cycle t);
  // Retires every job covering `page` (and all older ones); returns the lane time afterwards.
  Cycle retire_through(PageNum page);
  // Retires everything and blocks the critical path until the lane is idle.
  Cycle drain();

  bool pending(PageNum page) const;
  std::size_t depth() const { return queue_.size(); }
  Cycle hash_cycles(std::size_t pages) const;

  struct Stats {
    std::uint64_t jobs = 0;
    std::uint64_t pages = 0;
    std::uint64_t grouped = 0;
    std::uint64_t forest_accesses = 0;
    std::uint64_t max_forest_accesses = 0;
    std::uint64_t top_cache_hits = 0;
    std::uint64_t max_depth = 0;
  };
  const Stats& stats() const { return stats_; }
  const MvcConfig& config() const { return cfg_; }

 private:
  RetiredJob retire_front();

  MacForest* forest_;
  TimingModel* timing_;
  MvcConfig cfg_;
  std::deque<VerificationJob> queue_;
  std::function<void(std::uint64_t)> hook_;
  Cycle horizon_ = 0;
  Stats stats_;
};

}  // namespace secscale
