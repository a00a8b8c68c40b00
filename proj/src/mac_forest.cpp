#include "secscale/mac_forest.hpp"

#include <algorithm>
#include <map>

namespace secscale {

namespace {

void put_le64(std::uint8_t* out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint64_t get_le64(const std::uint8_t* in) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | in[i];
  return v;
}

}  // namespace

void ForestConfig::validate() const {
  if (levels < 2) throw DomainError("forest needs at least 2 levels");
  if (arities.size() != levels - 1) throw DomainError("forest needs levels - 1 arities");
  for (unsigned a : arities)
    if (a < 2) throw DomainError("forest arity must be >= 2");
}

std::uint64_t ForestConfig::region_pages() const {
  std::uint64_t r = 1;
  for (unsigned a : arities) r *= a;
  return r;
}

ForestGeometry ForestGeometry::build(std::uint64_t pages, const ForestConfig& cfg) {
  cfg.validate();
  if (pages == 0) throw DomainError("forest needs at least one page");
  ForestGeometry g;
  g.region_pages = cfg.region_pages();
  std::uint64_t count = pages;
  std::uint64_t offset = 0;
  for (unsigned l = 0; l < cfg.levels; ++l) {
    g.level_count.push_back(count);
    g.level_offset.push_back(offset);
    offset += count * 8;
    if (l + 1 < cfg.levels) count = (count + cfg.arities[l] - 1) / cfg.arities[l];
  }
  return g;
}

std::uint64_t ForestGeometry::total_macs() const {
  std::uint64_t n = 0;
  for (auto c : level_count) n += c;
  return n;
}

std::uint64_t ForestGeometry::lower_bytes() const { return (total_macs() - top_count()) * 8; }

std::uint64_t forest_storage_bytes(std::uint64_t total_size, const ForestConfig& cfg) {
  return ForestGeometry::build(total_size / kPageSize, cfg).total_macs() * 8;
}

std::uint64_t forest_lower_bytes(std::uint64_t total_size, const ForestConfig& cfg) {
  return ForestGeometry::build(total_size / kPageSize, cfg).lower_bytes();
}

std::uint64_t forest_top_bytes(std::uint64_t total_size, const ForestConfig& cfg) {
  return ForestGeometry::build(total_size / kPageSize, cfg).top_count() * 8;
}

std::uint64_t subtree_region_of(PageNum page, const ForestConfig& cfg) {
  return page.value / cfg.region_pages();
}

std::optional<Mac> TopLevelMacCache::lookup(std::uint64_t region) {
  for (auto& e : entries_) {
    if (e.valid && e.region == region) {
      e.stamp = ++clock_;
      ++hits_;
      return e.value;
    }
  }
  ++misses_;
  return std::nullopt;
}

void TopLevelMacCache::insert(std::uint64_t region, Mac value) {
  if (entries_.empty()) return;
  Entry* slot = nullptr;
  for (auto& e : entries_) {
    if (e.valid && e.region == region) {
      slot = &e;
      break;
    }
  }
  if (!slot) {
    slot = &*std::min_element(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) {
      if (a.valid != b.valid) return !a.valid;
      return a.stamp < b.stamp;
    });
  }
  *slot = Entry{true, region, value, ++clock_};
}

Mac TopLevelStore::read(std::uint64_t index) {
  const auto r = epc_->read_block(index / 512, static_cast<unsigned>((index % 512) / 8), Cause::Forest);
  return Mac{get_le64(r.data.data() + (index % 8) * 8)};
}

void TopLevelStore::write(std::uint64_t index, Mac value) {
  const std::uint64_t page = index / 512;
  const auto block = static_cast<unsigned>((index % 512) / 8);
  Block b = epc_->read_block(page, block, Cause::Forest).data;
  put_le64(b.data() + (index % 8) * 8, value.value);
  epc_->write_block(page, block, b, Cause::Forest);
}

Mac TopLevelStore::peek(std::uint64_t index) const {
  const Block b = epc_->peek_block(index / 512, static_cast<unsigned>((index % 512) / 8));
  return Mac{get_le64(b.data() + (index % 8) * 8)};
}

MacForest::MacForest(EmulatedDram& dram, const ForestConfig& cfg, const Ssk& ssk, TopLevelStore& top)
    : dram_(&dram),
      cfg_(cfg),
      geo_(ForestGeometry::build(dram.layout().total_pages(), cfg)),
      ssk_(ssk),
      top_(&top),
      cache_(cfg.top_cache_entries),
      base_{dram.layout().forest_base()} {
  if (geo_.lower_bytes() > dram.layout().forest_size())
    throw LayoutError("forest storage region too small for the configured forest");
  if (TopLevelStore::pages_for(geo_.top_count()) > top.epc().pages())
    throw LayoutError("EPC store too small for the forest top level");
  static const PageBytes zero{};
  null_leaf_ = page_mac(PageKey{}, zero);
}

PhysAddr MacForest::node_addr(unsigned level, std::uint64_t index) const {
  if (level + 1 >= geo_.levels()) throw DomainError("top-level MACs live in the EPC");
  return base_ + (geo_.level_offset[level] + index * 8);
}

Mac MacForest::stored(unsigned level, std::uint64_t index) const {
  if (level + 1 == geo_.levels()) return top_->peek(index);
  std::uint8_t b[8];
  dram_->peek(node_addr(level, index), b);
  return Mac{get_le64(b)};
}

void MacForest::fail(PageNum page, const std::string& what) const {
  throw CatastrophicFailure(SecurityEventKind::ForestMacMismatch, page.value, what);
}

Mac MacForest::read_top(std::uint64_t region, bool& hit) {
  if (auto v = cache_.lookup(region)) {
    hit = true;
    return *v;
  }
  hit = false;
  const Mac v = top_->read(region);
  cache_.insert(region, v);
  return v;
}

void MacForest::write_top(std::uint64_t region, Mac value) {
  top_->write(region, value);
  cache_.insert(region, value);
}

std::vector<Mac> MacForest::read_group(unsigned level, std::uint64_t group) {
  const unsigned a = cfg_.arities[level];
  const std::uint64_t first = group * a;
  const std::uint64_t n = std::min<std::uint64_t>(a, geo_.level_count[level] - first);
  std::vector<std::uint8_t> raw = dram_->read(node_addr(level, first), n * 8, Cause::Forest);
  std::vector<Mac> out(a);
  for (std::uint64_t i = 0; i < n; ++i) out[i] = Mac{get_le64(raw.data() + i * 8)};
  return out;
}

void MacForest::write_node(unsigned level, std::uint64_t index, Mac value) {
  std::uint8_t b[8];
  put_le64(b, value.value);
  dram_->write(node_addr(level, index), b, Cause::Forest);
}

Mac MacForest::parent_of(unsigned level, std::uint64_t group, const std::vector<Mac>& children) const {
  return level_mac(ssk_, children, cfg_.arities[level], level + 1, group);
}

void MacForest::init_region(std::uint64_t region) {
  ++stats_.region_inits;
  std::uint64_t first = region * geo_.region_pages;
  std::uint64_t n = std::min(geo_.region_pages, geo_.level_count[0] - first);
  std::vector<Mac> cur(n, null_leaf_);
  for (unsigned l = 0; l + 1 < geo_.levels(); ++l) {
    std::vector<std::uint8_t> raw(cur.size() * 8);
    for (std::size_t i = 0; i < cur.size(); ++i) put_le64(raw.data() + i * 8, cur[i].value);
    dram_->write(node_addr(l, first), raw, Cause::Forest);
    const unsigned a = cfg_.arities[l];
    std::vector<Mac> next;
    for (std::uint64_t g = first / a; g * a < first + cur.size(); ++g) {
      std::vector<Mac> children(a);
      for (unsigned k = 0; k < a; ++k) {
        const std::uint64_t idx = g * a + k;
        if (idx >= first && idx < first + cur.size()) children[k] = cur[idx - first];
      }
      next.push_back(parent_of(l, g, children));
    }
    first /= a;
    cur = std::move(next);
  }
  write_top(region, cur.front());
}

MacForest::VerifyResult MacForest::verify_page(PageNum page, const PageKey& key,
                                               std::span<const std::uint8_t, kPageSize> bytes) {
  return verify_leaf(page, page_mac(key, bytes));
}

MacForest::VerifyResult MacForest::verify_leaves(const std::vector<ForestUpdate>& leaves) {
  if (leaves.empty()) throw DomainError("nothing to verify");
  const PageNum page = leaves.front().page;
  const std::uint64_t region = region_of(page);
  for (const auto& l : leaves) {
    if (l.page.value >= geo_.level_count[0]) throw DomainError("page outside the forest");
    if (region_of(l.page) != region) throw DomainError("grouped verification spans two regions");
  }
  const std::uint64_t before = dram_->accesses(Cause::Forest);
  VerifyResult r;
  const Mac top = read_top(region, r.cache_hit);
  if (top.value == 0) {
    for (const auto& l : leaves)
      if (l.mac != null_leaf_) fail(l.page, "page MAC does not match an untouched region");
  } else {
    std::map<std::uint64_t, Mac> cur;
    for (const auto& l : leaves) {
      auto [it, fresh] = cur.emplace(l.page.value, l.mac);
      if (!fresh && it->second != l.mac) fail(l.page, "conflicting MACs for one page");
    }
    for (unsigned lvl = 0; lvl + 1 < geo_.levels(); ++lvl) {
      const unsigned a = cfg_.arities[lvl];
      std::map<std::uint64_t, Mac> next;
      for (const auto& [idx, value] : cur) {
        const std::uint64_t g = idx / a;
        if (next.count(g)) continue;
        const std::vector<Mac> group = read_group(lvl, g);
        for (const auto& [i, v] : cur)
          if (i / a == g && group[i - g * a] != v)
            fail(page, "forest MAC mismatch at level " + std::to_string(lvl));
        next[g] = parent_of(lvl, g, group);
      }
      cur = std::move(next);
    }
    if (cur.at(region) != top) fail(page, "forest top-level MAC mismatch");
  }
  r.verified = true;
  r.dram_accesses = static_cast<unsigned>(dram_->accesses(Cause::Forest) - before);
  stats_.verifications += leaves.size();
  stats_.verify_accesses += r.dram_accesses;
  stats_.max_verify_accesses = std::max<std::uint64_t>(stats_.max_verify_accesses, r.dram_accesses);
  return r;
}

void MacForest::apply(const std::vector<ForestUpdate>& updates) {
  const PageNum page = updates.front().page;
  const std::uint64_t region = region_of(page);
  bool hit = false;
  Mac top = read_top(region, hit);
  if (top.value == 0) {
    init_region(region);
    top = read_top(region, hit);
  }
  std::map<std::uint64_t, Mac> changes;
  std::map<std::uint64_t, Mac> expected;
  for (const auto& u : updates) changes[u.page.value] = u.mac;
  for (unsigned l = 0; l + 1 < geo_.levels(); ++l) {
    const unsigned a = cfg_.arities[l];
    std::map<std::uint64_t, Mac> next_new;
    std::map<std::uint64_t, Mac> next_old;
    for (const auto& [idx, value] : changes) {
      const std::uint64_t g = idx / a;
      if (next_new.count(g)) continue;
      std::vector<Mac> group = read_group(l, g);
      for (const auto& [i, old] : expected)
        if (i / a == g && group[i - g * a] != old)
          fail(page, "forest MAC mismatch at level " + std::to_string(l) + " during update");
      next_old[g] = parent_of(l, g, group);
      for (const auto& [i, v] : changes) {
        if (i / a != g) continue;
        group[i - g * a] = v;
        write_node(l, i, v);
      }
      next_new[g] = parent_of(l, g, group);
    }
    changes = std::move(next_new);
    expected = std::move(next_old);
  }
  if (expected.at(region) != top) fail(page, "forest top-level MAC mismatch during update");
  write_top(region, changes.at(region));
}

unsigned MacForest::update_on_evict(PageNum page, Mac new_mac, std::optional<ForestUpdate> club_with) {
  if (page.value >= geo_.level_count[0]) throw DomainError("page outside the forest");
  const std::uint64_t before = dram_->accesses(Cause::Forest);
  if (club_with && club_with->page == page) {
    new_mac = club_with->mac;
    club_with.reset();
  }
  if (club_with && region_of(club_with->page) == region_of(page)) {
    apply({{page, new_mac}, *club_with});
    ++stats_.clubbed_updates;
    stats_.updates += 2;
  } else {
    apply({{page, new_mac}});
    ++stats_.updates;
    if (club_with) {
      apply({*club_with});
      ++stats_.updates;
    }
  }
  const auto n = static_cast<unsigned>(dram_->accesses(Cause::Forest) - before);
  stats_.update_accesses += n;
  return n;
}

}  // namespace secscale
