#include "oracle.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <algorithm>
#include <stdexcept>

namespace oracle {

namespace {

void le64(std::uint8_t* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint64_t rd64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

unsigned minor_width(unsigned arity) { return std::min(56u, 384u / arity); }

}  // namespace

std::uint64_t hmac64(std::span<const std::uint8_t> key, std::span<const std::uint8_t> msg) {
  unsigned char md[32];
  unsigned len = 0;
  HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), msg.data(), msg.size(), md, &len);
  return rd64(md);
}

void aes256_ecb(const Key& key, const std::uint8_t* in, std::uint8_t* out, std::size_t n, bool encrypt) {
  EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
  EVP_CipherInit_ex(ctx, EVP_aes_256_ecb(), nullptr, key.data(), nullptr, encrypt ? 1 : 0);
  EVP_CIPHER_CTX_set_padding(ctx, 0);
  int len = 0;
  EVP_CipherUpdate(ctx, out, &len, in, static_cast<int>(n));
  EVP_CIPHER_CTX_free(ctx);
  if (static_cast<std::size_t>(len) != n) throw std::runtime_error("aes length");
}

Key pack_key(std::uint64_t hw, std::uint32_t enclave, const std::array<std::uint8_t, 16>& random,
             std::uint32_t page, unsigned block) {
  std::vector<int> bits;
  auto put = [&](std::uint64_t v, int n) {
    for (int i = n - 1; i >= 0; --i) bits.push_back(static_cast<int>((v >> i) & 1));
  };
  put(hw, 64);
  put(enclave, 31);
  for (auto b : random) put(b, 8);
  put(page, 27);
  put(block, 6);
  Key k{};
  for (std::size_t i = 0; i < 256; ++i)
    if (bits[i]) k[i / 8] |= static_cast<std::uint8_t>(0x80 >> (i % 8));
  return k;
}

MerkleModel::MerkleModel(const secscale::MerkleGeometry& g) {
  for (unsigned l = 0; l < g.depth(); ++l) {
    arity_.push_back(g.level_arity[l]);
    bits_.push_back(l == 0 ? 6 : minor_width(g.level_arity[l]));
    levels_.emplace_back(g.level_nodes[l], Node{0, std::vector<std::uint64_t>(g.level_arity[l], 0)});
  }
  root_.assign(g.level_nodes.back(), 0);
}

void MerkleModel::bump(Node& n, std::uint64_t slot, unsigned bits) {
  if (++n.minors[slot] >= (std::uint64_t{1} << bits)) {
    ++n.major;
    std::fill(n.minors.begin(), n.minors.end(), 0);
  }
}

void MerkleModel::write(std::uint64_t page, unsigned block) {
  std::uint64_t idx = page;
  bump(levels_[0][idx], block, bits_[0]);
  for (std::size_t l = 1; l < levels_.size(); ++l) {
    const std::uint64_t parent = idx / arity_[l];
    bump(levels_[l][parent], idx % arity_[l], bits_[l]);
    idx = parent;
  }
  ++root_[idx];
}

std::uint64_t MerkleModel::block_counter(std::uint64_t page, unsigned block) const {
  const Node& n = levels_[0][page];
  return (n.major << bits_[0]) + n.minors[block];
}

std::uint64_t MerkleModel::counter_of(unsigned level, std::uint64_t index) const {
  if (level + 1 == levels_.size()) return root_[index];
  const unsigned a = arity_[level + 1];
  const Node& p = levels_[level + 1][index / a];
  return (p.major << bits_[level + 1]) + p.minors[index % a];
}

std::array<std::uint8_t, 64> MerkleModel::image(unsigned level, std::uint64_t index, const Key& mac_key) const {
  const Node& n = levels_[level][index];
  std::array<std::uint8_t, 64> out{};
  le64(out.data(), n.major);
  const unsigned bits = bits_[level];
  for (std::size_t i = 0; i < n.minors.size(); ++i)
    for (unsigned k = 0; k < bits; ++k)
      if ((n.minors[i] >> k) & 1) {
        const std::size_t pos = 64 + i * bits + k;
        out[pos / 8] |= static_cast<std::uint8_t>(1u << (pos % 8));
      }
  std::vector<std::uint8_t> msg(17 + 56);
  msg[0] = static_cast<std::uint8_t>(level);
  le64(msg.data() + 1, index);
  le64(msg.data() + 9, counter_of(level, index));
  std::copy(out.begin(), out.begin() + 56, msg.begin() + 17);
  le64(out.data() + 56, hmac64(mac_key, msg));
  return out;
}

CheckResult check_merkle(const secscale::ProtectedEpc& epc, const secscale::EmulatedDram& dram,
                         const MerkleModel& model, const Key& mac_key) {
  CheckResult r;
  const auto& tree = epc.tree();
  const auto& g = tree.geometry();
  for (unsigned l = 0; l < g.depth(); ++l) {
    for (std::uint64_t i = 0; i < g.level_nodes[l]; ++i) {
      std::array<std::uint8_t, 64> stored;
      dram.peek(tree.node_addr(l, i), stored);
      ++r.checked;
      if (stored != model.image(l, i, mac_key)) ++r.mismatches;
    }
  }
  for (std::uint64_t s = 0; s < g.level_nodes.back(); ++s) {
    ++r.checked;
    if (tree.root_counter(s) != model.root(s)) ++r.mismatches;
  }
  for (std::uint64_t p = 0; p < epc.pages(); ++p) {
    for (unsigned b = 0; b < secscale::kBlocksPerPage; ++b) {
      std::vector<std::uint8_t> msg(16 + secscale::kBlockSize);
      le64(msg.data(), epc.data_addr(p, b).value);
      le64(msg.data() + 8, model.block_counter(p, b));
      dram.peek(epc.data_addr(p, b), std::span<std::uint8_t>(msg.data() + 16, secscale::kBlockSize));
      std::uint8_t mac[8];
      dram.peek(epc.mac_addr(p, b), mac);
      ++r.checked;
      if (rd64(mac) != hmac64(mac_key, msg)) ++r.mismatches;
    }
  }
  return r;
}

CheckResult check_forest(secscale::EpcManager& mgr, const secscale::EmulatedDram& dram) {
  using secscale::kPageSize;
  using secscale::PageNum;
  CheckResult r;
  auto& forest = mgr.forest();
  const auto& g = forest.geometry();
  const auto& arities = forest.config().arities;
  const auto& layout = dram.layout();
  const auto& keys = mgr.keys();
  const Key ssk = keys.ssk.bytes();
  const unsigned top = g.levels() - 1;

  std::vector<std::uint8_t> zero_page(kPageSize, 0);
  const Key zero_key{};
  const std::uint64_t null_leaf = hmac64(zero_key, zero_page);

  for (std::uint64_t region = 0; region < g.top_count(); ++region) {
    const std::uint64_t first = region * g.region_pages;
    const std::uint64_t last = std::min(first + g.region_pages, g.level_count[0]);
    std::vector<std::uint64_t> cur;
    bool any_key = false;
    for (std::uint64_t p = first; p < last; ++p) {
      std::uint64_t leaf = null_leaf;
      const PageNum page{p};
      if (layout.is_eepc(page)) {
        std::array<std::uint8_t, 16> slot;
        dram.peek(layout.key_table_slot(page), slot);
        if (slot != std::array<std::uint8_t, 16>{}) {
          any_key = true;
          const auto owner = mgr.owner_of(page);
          std::array<std::uint8_t, 16> random;
          aes256_ecb(ssk, slot.data(), random.data(), 16, false);
          std::vector<std::uint8_t> plain(kPageSize);
          dram.peek(secscale::page_base(page), plain);
          for (unsigned b = 0; b < secscale::kBlocksPerPage; ++b) {
            const Key bk = pack_key(keys.hw_key, owner.value_or(0), random, static_cast<std::uint32_t>(p), b);
            std::uint8_t* blk = plain.data() + b * secscale::kBlockSize;
            aes256_ecb(bk, blk, blk, secscale::kBlockSize, false);
          }
          leaf = hmac64(pack_key(keys.hw_key, owner.value_or(0), random, static_cast<std::uint32_t>(p), 0), plain);
        }
      }
      cur.push_back(leaf);
    }
    if (forest.stored(top, region).value == 0) {
      ++r.checked;
      if (any_key) ++r.mismatches;
      continue;
    }
    std::uint64_t lo = first;
    for (unsigned l = 0;; ++l) {
      for (std::size_t i = 0; i < cur.size(); ++i) {
        ++r.checked;
        if (forest.stored(l, lo + i).value != cur[i]) ++r.mismatches;
      }
      if (l == top) break;
      const unsigned a = arities[l];
      std::vector<std::uint64_t> next;
      for (std::uint64_t grp = lo / a; grp * a < lo + cur.size(); ++grp) {
        std::vector<std::uint8_t> msg(12 + 8 * a, 0);
        le64(msg.data(), grp);
        msg[8] = static_cast<std::uint8_t>(l + 1);
        for (unsigned k = 0; k < a; ++k) {
          const std::uint64_t idx = grp * a + k;
          if (idx >= lo && idx < lo + cur.size()) le64(msg.data() + 12 + 8 * k, cur[idx - lo]);
        }
        next.push_back(hmac64(ssk, msg));
      }
      lo /= a;
      cur = std::move(next);
    }
  }
  return r;
}

}  // namespace oracle
