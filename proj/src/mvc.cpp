#include "secscale/mvc.hpp"

#include <algorithm>
#include <cmath>

namespace secscale {

Mvc::Mvc(MacForest& forest, TimingModel& timing, const MvcConfig& cfg)
    : forest_(&forest), timing_(&timing), cfg_(cfg) {}

Cycle Mvc::hash_cycles(std::size_t pages) const {
  return static_cast<Cycle>(
      std::ceil(static_cast<double>(pages * kPageSize) / timing_->config().mvc_bytes_per_cycle));
}

std::size_t Mvc::enqueue(VerificationJob job) {
  if (job.pages.empty()) throw DomainError("verification job without pages");
  job.instructions_at_enqueue = timing_->instructions();
  if (!cfg_.deferred) {
    queue_.push_back(std::move(job));
    retire_front();
    timing_->wait_for(Lane::Verify);
    return 0;
  }
  if (cfg_.grouping && job.pages.size() == 1 && !queue_.empty()) {
    auto& tail = queue_.back();
    const Cycle tail_start = std::max(timing_->lane_free(Lane::Verify), tail.ready_at);
    if (tail.pages.size() == 1 && tail_start > horizon_ &&
        forest_->region_of(tail.pages.front().page) == forest_->region_of(job.pages.front().page) &&
        tail.pages.front().page != job.pages.front().page) {
      tail.pages.push_back(job.pages.front());
      tail.ready_at = std::max(tail.ready_at, job.ready_at);
      ++stats_.grouped;
      return queue_.size();
    }
  }
  queue_.push_back(std::move(job));
  stats_.max_depth = std::max<std::uint64_t>(stats_.max_depth, queue_.size());
  if (cfg_.max_outstanding != 0 && queue_.size() > cfg_.max_outstanding) {
    const RetiredJob r = retire_front();
    timing_->wait_until(r.finished);
  }
  return queue_.size();
}

RetiredJob Mvc::retire_front() {
  VerificationJob job = std::move(queue_.front());
  queue_.pop_front();
  RetiredJob r;
  std::vector<ForestUpdate> leaves;
  for (const auto& p : job.pages) {
    r.pages.push_back(p.page);
    leaves.push_back({p.page, page_mac(p.key, *p.bytes)});
  }
  if (hook_) hook_(forest_->region_of(job.pages.front().page));
  MacForest::VerifyResult v;
  try {
    v = forest_->verify_leaves(leaves);
  } catch (const CatastrophicFailure& e) {
    throw e.with_speculation(timing_->instructions() - job.instructions_at_enqueue);
  }
  r.forest_accesses = v.dram_accesses;
  r.cache_hit = v.cache_hit;
  const Cycle cost = hash_cycles(job.pages.size()) + timing_->cost(Event::DramAccess, v.dram_accesses) +
                     timing_->cost(Event::MacCompute, forest_->geometry().levels() - 1);
  r.finished = timing_->charge_cycles(Lane::Verify, cost, job.ready_at);
  ++stats_.jobs;
  stats_.pages += job.pages.size();
  stats_.forest_accesses += v.dram_accesses;
  stats_.max_forest_accesses = std::max<std::uint64_t>(stats_.max_forest_accesses, v.dram_accesses);
  if (v.cache_hit) ++stats_.top_cache_hits;
  return r;
}

std::vector<RetiredJob> Mvc::advance_to(Cycle t) {
  horizon_ = std::max(horizon_, t);
  std::vector<RetiredJob> out;
  while (!queue_.empty()) {
    const auto& job = queue_.front();
    const Cycle start = std::max(timing_->lane_free(Lane::Verify), job.ready_at);
    if (start + hash_cycles(job.pages.size()) > horizon_) break;
    out.push_back(retire_front());
  }
  return out;
}

std::vector<RetiredJob> Mvc::tick(Cycle cycles) {
  if (cycles == 0) throw DomainError("tick needs a positive cycle budget");
  return advance_to(horizon_ + cycles);
}

Cycle Mvc::retire_through(PageNum page) {
  if (!pending(page)) return timing_->lane_free(Lane::Verify);
  for (;;) {
    const bool hit = std::any_of(queue_.front().pages.begin(), queue_.front().pages.end(),
                                 [&](const auto& p) { return p.page == page; });
    retire_front();
    if (hit && !pending(page)) break;
  }
  return timing_->lane_free(Lane::Verify);
}

Cycle Mvc::drain() {
  while (!queue_.empty()) retire_front();
  return timing_->wait_for(Lane::Verify);
}

bool Mvc::pending(PageNum page) const {
  for (const auto& job : queue_)
    for (const auto& p : job.pages)
      if (p.page == page) return true;
  return false;
}

}  // namespace secscale
