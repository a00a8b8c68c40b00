#include "secscale/address_space.hpp"

#include <algorithm>
#include <cstring>

namespace secscale {

namespace {

constexpr std::uint64_t round_up_page(std::uint64_t v) {
  return (v + kPageSize - 1) / kPageSize * kPageSize;
}

}  // namespace

std::string to_string(SecurityEventKind kind) {
  switch (kind) {
    case SecurityEventKind::MerkleMacMismatch: return "MerkleMacMismatch";
    case SecurityEventKind::EpcBlockMacMismatch: return "EpcBlockMacMismatch";
    case SecurityEventKind::ForestMacMismatch: return "ForestMacMismatch";
    case SecurityEventKind::MappingViolation: return "MappingViolation";
    case SecurityEventKind::CrossEnclaveMapping: return "CrossEnclaveMapping";
  }
  return "Unknown";
}

std::string_view to_string(Region r) {
  switch (r) {
    case Region::Epc: return "epc";
    case Region::Eepc: return "eepc";
    case Region::KeyTable: return "key_table";
    case Region::ForestStorage: return "forest_storage";
    case Region::Scratch: return "scratch";
  }
  return "?";
}

std::string_view to_string(Cause c) {
  switch (c) {
    case Cause::Data: return "data";
    case Cause::Merkle: return "merkle";
    case Cause::Forest: return "forest";
    case Cause::KeyTable: return "key_table";
  }
  return "?";
}

MemoryLayout::MemoryLayout(const LayoutConfig& cfg)
    : total_size_(cfg.total_size),
      epc_base_(cfg.epc_base),
      epc_size_(cfg.epc_size),
      scratch_pages_(cfg.scratch_pages) {
  if (total_size_ == 0 || total_size_ % kPageSize != 0)
    throw LayoutError("total_size must be a positive multiple of 4096");
  if (total_size_ > kMaxPhysSize) throw LayoutError("total_size exceeds the 39-bit physical space");
  if (epc_base_ % kPageSize != 0 || epc_size_ % kPageSize != 0 || epc_size_ == 0)
    throw LayoutError("EPC base and size must be page aligned and non-empty");

  key_table_size_ = round_up_page(total_pages() * kKeySlotBytes);
  forest_size_ = round_up_page(cfg.forest_bytes);
  if (key_table_size_ + forest_size_ >= total_size_)
    throw LayoutError("key table and forest storage do not fit in total_size");
  key_table_base_ = total_size_ - key_table_size_;
  forest_base_ = key_table_base_ - forest_size_;

  const std::uint64_t secure_end = scratch_base() + scratch_pages_ * kPageSize;
  if (secure_end > forest_base_) throw LayoutError("EPC and scratch overlap the carved-out metadata");
  if (region_size(Region::Eepc) == 0) throw LayoutError("layout leaves no eEPC pages");
}

Region MemoryLayout::classify(PhysAddr addr) const {
  const auto a = addr.value;
  if (a >= total_size_) throw LayoutError("address " + std::to_string(a) + " out of range");
  if (a >= key_table_base_) return Region::KeyTable;
  if (a >= forest_base_) return Region::ForestStorage;
  if (a >= epc_base_ && a < epc_base_ + epc_size_) return Region::Epc;
  if (a >= scratch_base() && a < scratch_base() + scratch_pages_ * kPageSize) return Region::Scratch;
  return Region::Eepc;
}

bool MemoryLayout::is_eepc(PageNum page) const {
  return page.value < total_pages() && classify(page) == Region::Eepc;
}

PhysAddr MemoryLayout::key_table_slot(PageNum page) const {
  if (!is_eepc(page)) throw DomainError("page " + std::to_string(page.value) + " is not in the eEPC");
  return {key_table_base_ + page.value * kKeySlotBytes};
}

std::uint64_t MemoryLayout::region_size(Region r) const {
  switch (r) {
    case Region::Epc: return epc_size_;
    case Region::Scratch: return scratch_pages_ * kPageSize;
    case Region::KeyTable: return key_table_size_;
    case Region::ForestStorage: return forest_size_;
    case Region::Eepc:
      return forest_base_ - epc_size_ - scratch_pages_ * kPageSize;
  }
  return 0;
}

PageNum MemoryLayout::eepc_page(std::uint64_t index) const {
  const std::uint64_t low_pages = epc_base_ / kPageSize;
  if (index < low_pages) return {index};
  const std::uint64_t high_first = (scratch_base() + scratch_pages_ * kPageSize) / kPageSize;
  const PageNum p{high_first + (index - low_pages)};
  if (p.value >= forest_base_ / kPageSize) throw DomainError("eEPC index out of range");
  return p;
}

Region EmulatedDram::check_range(PhysAddr addr, std::size_t len) const {
  if (len == 0) return layout_->classify(addr);
  const Region first = layout_->classify(addr);
  const Region last = layout_->classify(addr + (len - 1));
  if (first != last) throw LayoutError("DRAM access crosses a region boundary");
  return first;
}

PageBytes& EmulatedDram::page_for_write(std::uint64_t page) {
  auto [it, inserted] = pages_.try_emplace(page);
  if (inserted) it->second.fill(0);
  return it->second;
}

void EmulatedDram::peek(PhysAddr addr, std::span<std::uint8_t> out) const {
  check_range(addr, out.size());
  std::size_t done = 0;
  while (done < out.size()) {
    const std::uint64_t a = addr.value + done;
    const std::uint64_t off = a % kPageSize;
    const std::size_t n = std::min<std::size_t>(out.size() - done, kPageSize - off);
    auto it = pages_.find(a / kPageSize);
    if (it == pages_.end())
      std::memset(out.data() + done, 0, n);
    else
      std::memcpy(out.data() + done, it->second.data() + off, n);
    done += n;
  }
}

void EmulatedDram::poke(PhysAddr addr, std::span<const std::uint8_t> in) {
  check_range(addr, in.size());
  std::size_t done = 0;
  while (done < in.size()) {
    const std::uint64_t a = addr.value + done;
    const std::uint64_t off = a % kPageSize;
    const std::size_t n = std::min<std::size_t>(in.size() - done, kPageSize - off);
    std::memcpy(page_for_write(a / kPageSize).data() + off, in.data() + done, n);
    done += n;
  }
}

void EmulatedDram::read(PhysAddr addr, std::span<std::uint8_t> out, Cause cause) {
  const Region r = check_range(addr, out.size());
  peek(addr, out);
  ++reads_[static_cast<std::size_t>(r)];
  ++by_cause_[static_cast<std::size_t>(cause)];
}

std::vector<std::uint8_t> EmulatedDram::read(PhysAddr addr, std::size_t len, Cause cause) {
  std::vector<std::uint8_t> out(len);
  read(addr, out, cause);
  return out;
}

void EmulatedDram::write(PhysAddr addr, std::span<const std::uint8_t> in, Cause cause) {
  const Region r = check_range(addr, in.size());
  poke(addr, in);
  ++writes_[static_cast<std::size_t>(r)];
  ++by_cause_[static_cast<std::size_t>(cause)];
}

std::uint64_t EmulatedDram::total_accesses() const {
  std::uint64_t n = 0;
  for (auto c : by_cause_) n += c;
  return n;
}

void EmulatedDram::reset_counters() {
  reads_.fill(0);
  writes_.fill(0);
  by_cause_.fill(0);
}

}  // namespace secscale
