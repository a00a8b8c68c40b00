#include "secscale/epc_merkle.hpp"

#include <algorithm>
#include <cstring>

namespace secscale {

namespace {

constexpr unsigned kLeafMinorBits = 6;

void put_le64(std::uint8_t* out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint64_t get_le64(const std::uint8_t* in) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | in[i];
  return v;
}

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

std::uint64_t round_up_page(std::uint64_t v) { return ceil_div(v, kPageSize) * kPageSize; }

}  // namespace

unsigned minor_bits_for(unsigned arity) {
  if (arity == 0 || arity > 384) throw DomainError("counter-tree arity must be in [1, 384]");
  return std::min(56u, 384u / arity);
}

MerkleGeometry MerkleGeometry::build(std::uint64_t pages, const MerkleTreeConfig& cfg) {
  if (cfg.arities.empty()) throw DomainError("counter tree needs at least one arity");
  for (unsigned a : cfg.arities)
    if (a < 2) throw DomainError("counter-tree arity must be >= 2");
  if (pages == 0) throw DomainError("counter tree needs at least one page");
  MerkleGeometry g;
  std::uint64_t count = pages;
  std::uint64_t offset = 0;
  unsigned child_arity = kBlocksPerPage;
  for (std::size_t level = 0;; ++level) {
    g.level_nodes.push_back(count);
    g.level_arity.push_back(child_arity);
    g.level_offset.push_back(offset);
    offset += count * 64;
    const unsigned a = cfg.arities[std::min(level, cfg.arities.size() - 1)];
    if (count <= a) {
      g.root_children = count;
      break;
    }
    count = ceil_div(count, a);
    child_arity = a;
  }
  return g;
}

std::uint64_t MerkleGeometry::stored_nodes() const {
  std::uint64_t n = 0;
  for (auto c : level_nodes) n += c;
  return n;
}

std::uint64_t MerkleGeometry::parent_arity(unsigned level) const {
  if (level + 1 < depth()) return level_arity[level + 1];
  return root_children;
}

std::uint64_t merkle_storage_bytes(std::uint64_t protected_size, const MerkleTreeConfig& cfg) {
  return MerkleGeometry::build(ceil_div(protected_size, kPageSize), cfg).stored_bytes();
}

std::uint64_t MerkleNode::major() const { return get_le64(bytes.data()); }
void MerkleNode::set_major(std::uint64_t v) { put_le64(bytes.data(), v); }
Mac MerkleNode::mac() const { return Mac{get_le64(bytes.data() + 56)}; }
void MerkleNode::set_mac(Mac m) { put_le64(bytes.data() + 56, m.value); }

std::uint64_t MerkleNode::minor(unsigned i, unsigned bits) const {
  std::uint64_t v = 0;
  const unsigned start = 64 + i * bits;
  for (unsigned k = 0; k < bits; ++k) {
    const unsigned pos = start + k;
    v |= static_cast<std::uint64_t>((bytes[pos / 8] >> (pos % 8)) & 1u) << k;
  }
  return v;
}

void MerkleNode::set_minor(unsigned i, unsigned bits, std::uint64_t v) {
  const unsigned start = 64 + i * bits;
  for (unsigned k = 0; k < bits; ++k) {
    const unsigned pos = start + k;
    const auto mask = static_cast<std::uint8_t>(1u << (pos % 8));
    if ((v >> k) & 1u)
      bytes[pos / 8] |= mask;
    else
      bytes[pos / 8] &= static_cast<std::uint8_t>(~mask);
  }
}

CounterCache::CounterCache(std::uint64_t bytes) : lines_(bytes / 64) {}

const MerkleNode* CounterCache::lookup(PhysAddr addr) {
  if (lines_.empty()) {
    ++misses_;
    return nullptr;
  }
  auto& line = lines_[(addr.value / 64) % lines_.size()];
  if (line.valid && line.addr == addr.value) {
    ++hits_;
    return &line.node;
  }
  ++misses_;
  return nullptr;
}

void CounterCache::insert(PhysAddr addr, const MerkleNode& node) {
  if (lines_.empty()) return;
  auto& line = lines_[(addr.value / 64) % lines_.size()];
  line.valid = true;
  line.addr = addr.value;
  line.node = node;
}

void CounterCache::clear() {
  for (auto& l : lines_) l.valid = false;
}

MerkleTree::MerkleTree(EmulatedDram& dram, PhysAddr node_base, std::uint64_t pages,
                       const MerkleTreeConfig& cfg, const Key256& mac_key)
    : dram_(&dram),
      base_(node_base),
      pages_(pages),
      geo_(MerkleGeometry::build(pages, cfg)),
      mac_key_(mac_key),
      root_(geo_.root_children, 0),
      cache_(cfg.counter_cache_bytes) {}

PhysAddr MerkleTree::node_addr(unsigned level, std::uint64_t index) const {
  return base_ + (geo_.level_offset.at(level) + index * 64);
}

std::uint64_t MerkleTree::index_at(std::uint64_t page, unsigned level) const {
  std::uint64_t idx = page;
  for (unsigned l = 1; l <= level; ++l) idx /= geo_.level_arity[l];
  return idx;
}

Mac MerkleTree::node_mac(unsigned level, std::uint64_t index, const MerkleNode& node,
                         std::uint64_t counter) const {
  std::uint8_t header[17];
  header[0] = static_cast<std::uint8_t>(level);
  put_le64(header + 1, index);
  put_le64(header + 9, counter);
  return keyed_mac(mac_key_, {std::span<const std::uint8_t>(header), node.counter_area()});
}

std::uint64_t MerkleTree::counter_for(unsigned level, std::uint64_t index, const MerkleNode* parent) const {
  const auto arity = geo_.parent_arity(level);
  if (level + 1 >= geo_.depth()) return root_[index];
  return parent->child_counter(static_cast<unsigned>(index % arity), minor_bits_for(static_cast<unsigned>(arity)));
}

std::uint64_t MerkleTree::block_counter(const MerkleNode& leaf, unsigned block) {
  return leaf.child_counter(block, kLeafMinorBits);
}

void MerkleTree::initialize() {
  // Zero counters: every child counter is 0, so every MAC is keyed by 0.
  for (unsigned level = 0; level < geo_.depth(); ++level) {
    for (std::uint64_t i = 0; i < geo_.level_nodes[level]; ++i) {
      MerkleNode n;
      n.set_mac(node_mac(level, i, n, 0));
      dram_->poke(node_addr(level, i), n.bytes);
    }
  }
  std::fill(root_.begin(), root_.end(), 0);
  cache_.clear();
}

MerkleNode MerkleTree::fetch(unsigned level, std::uint64_t index, bool& from_dram, unsigned& accesses) {
  const PhysAddr addr = node_addr(level, index);
  if (const MerkleNode* c = cache_.lookup(addr)) {
    from_dram = false;
    return *c;
  }
  MerkleNode n;
  dram_->read(addr, n.bytes, Cause::Merkle);
  ++accesses;
  from_dram = true;
  return n;
}

void MerkleTree::verify(unsigned level, std::uint64_t index, const MerkleNode& node,
                        std::uint64_t counter) const {
  if (node.mac() != node_mac(level, index, node, counter))
    throw CatastrophicFailure(SecurityEventKind::MerkleMacMismatch, index,
                              "counter-tree node MAC mismatch at level " + std::to_string(level));
}

void MerkleTree::store(unsigned level, std::uint64_t index, const MerkleNode& node, unsigned& accesses) {
  const PhysAddr addr = node_addr(level, index);
  dram_->write(addr, node.bytes, Cause::Merkle);
  ++accesses;
  cache_.insert(addr, node);
}

MerkleTree::ReadResult MerkleTree::read_verify(std::uint64_t page, unsigned block) {
  if (page >= pages_) throw DomainError("page outside the counter tree");
  ReadResult r;
  const unsigned depth = geo_.depth();
  std::vector<MerkleNode> path(depth);
  std::vector<bool> fetched(depth, false);
  unsigned top = depth;  // first trusted level (depth means the root)
  for (unsigned level = 0; level < depth; ++level) {
    bool from_dram = false;
    path[level] = fetch(level, index_at(page, level), from_dram, r.dram_accesses);
    if (!from_dram) {
      top = level;
      break;
    }
    fetched[level] = true;
  }
  const unsigned highest = top == depth ? depth : top;
  for (unsigned level = highest; level-- > 0;) {
    if (!fetched[level]) continue;
    const std::uint64_t idx = index_at(page, level);
    const MerkleNode* parent = level + 1 < depth ? &path[level + 1] : nullptr;
    verify(level, idx, path[level], counter_for(level, idx, parent));
    cache_.insert(node_addr(level, idx), path[level]);
  }
  r.counter = block_counter(path[0], block);
  r.verified = true;
  return r;
}

MerkleTree::WriteResult MerkleTree::write_update(std::uint64_t page, unsigned block) {
  if (page >= pages_) throw DomainError("page outside the counter tree");
  WriteResult r;
  const unsigned depth = geo_.depth();
  std::vector<MerkleNode> path(depth);
  std::vector<bool> fetched(depth, false);
  std::vector<std::uint64_t> idx(depth);
  for (unsigned level = 0; level < depth; ++level) {
    idx[level] = index_at(page, level);
    bool from_dram = false;
    path[level] = fetch(level, idx[level], from_dram, r.dram_accesses);
    fetched[level] = from_dram;
  }
  for (unsigned level = depth; level-- > 0;) {
    if (!fetched[level]) continue;
    const MerkleNode* parent = level + 1 < depth ? &path[level + 1] : nullptr;
    verify(level, idx[level], path[level], counter_for(level, idx[level], parent));
  }
  const std::vector<MerkleNode> old = path;

  // Leaf: bump the block's minor; on overflow the whole page moves to a new major.
  MerkleNode& leaf = path[0];
  const std::uint64_t m = leaf.minor(block, kLeafMinorBits) + 1;
  if (m >> kLeafMinorBits) {
    for (unsigned b = 0; b < kBlocksPerPage; ++b) r.old_counters[b] = block_counter(leaf, b);
    leaf.set_major(leaf.major() + 1);
    for (unsigned b = 0; b < kBlocksPerPage; ++b) leaf.set_minor(b, kLeafMinorBits, 0);
    for (unsigned b = 0; b < kBlocksPerPage; ++b) r.new_counters[b] = block_counter(leaf, b);
    r.page_rekeyed = true;
  } else {
    leaf.set_minor(block, kLeafMinorBits, m);
  }
  r.counter = block_counter(leaf, block);

  std::vector<bool> overflowed(depth, false);
  for (unsigned level = 0; level + 1 < depth; ++level) {
    MerkleNode& parent = path[level + 1];
    const auto arity = static_cast<unsigned>(geo_.level_arity[level + 1]);
    const unsigned bits = minor_bits_for(arity);
    const auto slot = static_cast<unsigned>(idx[level] % arity);
    const std::uint64_t pm = parent.minor(slot, bits) + 1;
    if (bits < 64 && (pm >> bits)) {
      parent.set_major(parent.major() + 1);
      for (unsigned s = 0; s < arity; ++s) parent.set_minor(s, bits, 0);
      overflowed[level + 1] = true;
    } else {
      parent.set_minor(slot, bits, pm);
    }
  }
  ++root_[idx[depth - 1]];

  for (unsigned level = 0; level < depth; ++level) {
    const MerkleNode* parent = level + 1 < depth ? &path[level + 1] : nullptr;
    path[level].set_mac(node_mac(level, idx[level], path[level], counter_for(level, idx[level], parent)));
    store(level, idx[level], path[level], r.dram_accesses);
  }

  // Siblings under an overflowed parent keep their contents but are re-keyed.
  for (unsigned plevel = 1; plevel < depth; ++plevel) {
    if (!overflowed[plevel]) continue;
    const unsigned clevel = plevel - 1;
    const auto arity = geo_.level_arity[plevel];
    const std::uint64_t first = idx[plevel] * arity;
    const std::uint64_t last = std::min(first + arity, geo_.level_nodes[clevel]);
    for (std::uint64_t c = first; c < last; ++c) {
      if (c == idx[clevel]) continue;
      bool from_dram = false;
      MerkleNode child = fetch(clevel, c, from_dram, r.dram_accesses);
      if (from_dram) verify(clevel, c, child, counter_for(clevel, c, &old[plevel]));
      child.set_mac(node_mac(clevel, c, child, counter_for(clevel, c, &path[plevel])));
      store(clevel, c, child, r.dram_accesses);
    }
  }
  return r;
}

ProtectedEpc::ProtectedEpc(EmulatedDram& dram, PhysAddr base, std::uint64_t pages,
                           const MerkleTreeConfig& cfg, const Keys& keys)
    : dram_(&dram),
      base_(base),
      pages_(pages),
      keys_(keys),
      tree_(dram, base, pages, cfg, keys.mac_key) {
  const std::uint64_t tree_bytes = round_up_page(tree_.geometry().stored_bytes());
  mac_base_ = base + tree_bytes;
  data_base_ = base + metadata_bytes(pages, cfg);
}

std::uint64_t ProtectedEpc::metadata_bytes(std::uint64_t pages, const MerkleTreeConfig& cfg) {
  const std::uint64_t tree_bytes = round_up_page(MerkleGeometry::build(pages, cfg).stored_bytes());
  return tree_bytes + round_up_page(pages * kBlocksPerPage * 8);
}

PhysAddr ProtectedEpc::data_addr(std::uint64_t page, unsigned block) const {
  return data_base_ + (page * kPageSize + block * kBlockSize);
}

PhysAddr ProtectedEpc::mac_addr(std::uint64_t page, unsigned block) const {
  return mac_base_ + (page * kBlocksPerPage + block) * 8;
}

Mac ProtectedEpc::block_mac(std::uint64_t page, unsigned block, std::uint64_t counter,
                            const Block& ciphertext) const {
  std::uint8_t header[16];
  put_le64(header, data_addr(page, block).value);
  put_le64(header + 8, counter);
  return keyed_mac(keys_.mac_key, {std::span<const std::uint8_t>(header), ciphertext});
}

void ProtectedEpc::initialize() {
  tree_.initialize();
  const Block zero{};
  for (std::uint64_t p = 0; p < pages_; ++p) {
    for (unsigned b = 0; b < kBlocksPerPage; ++b) {
      const Block ct = ctr_encrypt_block(keys_.data_key, phys_page(p), b, 0, zero);
      std::uint8_t mac[8];
      put_le64(mac, block_mac(p, b, 0, ct).value);
      dram_->poke(data_addr(p, b), ct);
      dram_->poke(mac_addr(p, b), mac);
    }
  }
}

ProtectedEpc::ReadResult ProtectedEpc::read_block(std::uint64_t page, unsigned block, Cause cause) {
  ReadResult r;
  const auto tr = tree_.read_verify(page, block);
  r.tree_accesses = tr.dram_accesses;
  Block ct;
  dram_->read(data_addr(page, block), ct, cause);
  std::uint8_t mac[8];
  dram_->read(mac_addr(page, block), mac, Cause::Merkle);
  if (get_le64(mac) != block_mac(page, block, tr.counter, ct).value)
    throw CatastrophicFailure(SecurityEventKind::EpcBlockMacMismatch, phys_page(page).value,
                              "EPC block " + std::to_string(block) + " MAC mismatch");
  r.data = ctr_decrypt_block(keys_.data_key, phys_page(page), block, tr.counter, ct);
  return r;
}

unsigned ProtectedEpc::write_block(std::uint64_t page, unsigned block, const Block& plaintext, Cause cause) {
  const auto wr = tree_.write_update(page, block);
  unsigned accesses = wr.dram_accesses;
  if (wr.page_rekeyed) {
    for (unsigned b = 0; b < kBlocksPerPage; ++b) {
      if (b == block) continue;
      Block ct;
      dram_->read(data_addr(page, b), ct, cause);
      std::uint8_t mac[8];
      dram_->read(mac_addr(page, b), mac, Cause::Merkle);
      if (get_le64(mac) != block_mac(page, b, wr.old_counters[b], ct).value)
        throw CatastrophicFailure(SecurityEventKind::EpcBlockMacMismatch, phys_page(page).value,
                                  "EPC block " + std::to_string(b) + " MAC mismatch during re-key");
      const Block pt = ctr_decrypt_block(keys_.data_key, phys_page(page), b, wr.old_counters[b], ct);
      const Block nct = ctr_encrypt_block(keys_.data_key, phys_page(page), b, wr.new_counters[b], pt);
      put_le64(mac, block_mac(page, b, wr.new_counters[b], nct).value);
      dram_->write(data_addr(page, b), nct, cause);
      dram_->write(mac_addr(page, b), mac, Cause::Merkle);
    }
  }
  const Block ct = ctr_encrypt_block(keys_.data_key, phys_page(page), block, wr.counter, plaintext);
  std::uint8_t mac[8];
  put_le64(mac, block_mac(page, block, wr.counter, ct).value);
  dram_->write(data_addr(page, block), ct, cause);
  dram_->write(mac_addr(page, block), mac, Cause::Merkle);
  if (observer_) observer_(page, block);
  return accesses;
}

std::uint64_t ProtectedEpc::stored_counter(std::uint64_t page, unsigned block) const {
  MerkleNode leaf;
  dram_->peek(tree_.node_addr(0, page), leaf.bytes);
  return MerkleTree::block_counter(leaf, block);
}

Block ProtectedEpc::peek_block(std::uint64_t page, unsigned block) const {
  Block ct;
  dram_->peek(data_addr(page, block), ct);
  return ctr_decrypt_block(keys_.data_key, phys_page(page), block, stored_counter(page, block), ct);
}

bool ProtectedEpc::blocks_consistent() const {
  for (std::uint64_t p = 0; p < pages_; ++p) {
    for (unsigned b = 0; b < kBlocksPerPage; ++b) {
      Block ct;
      dram_->peek(data_addr(p, b), ct);
      std::uint8_t mac[8];
      dram_->peek(mac_addr(p, b), mac);
      if (get_le64(mac) != block_mac(p, b, stored_counter(p, b), ct).value) return false;
    }
  }
  return true;
}

}  // namespace secscale
