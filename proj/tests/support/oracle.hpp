#pragma once

// Reference computations for the tests, written directly against OpenSSL and
// the documented byte formats rather than the library's own helpers.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "secscale/epc_manager.hpp"
#include "secscale/epc_merkle.hpp"

namespace oracle {

using Key = std::array<std::uint8_t, 32>;

// HMAC-SHA256, first 8 bytes read little-endian.
std::uint64_t hmac64(std::span<const std::uint8_t> key, std::span<const std::uint8_t> msg);
void aes256_ecb(const Key& key, const std::uint8_t* in, std::uint8_t* out, std::size_t n, bool encrypt);
// hw(64) | enclave(31) | random(128) | page(27) | block(6), most significant bit first.
Key pack_key(std::uint64_t hw, std::uint32_t enclave, const std::array<std::uint8_t, 16>& random,
             std::uint32_t page, unsigned block);

// Split-counter tree replayed from the sequence of block writes.
class MerkleModel {
 public:
  explicit MerkleModel(const secscale::MerkleGeometry& g);

  void write(std::uint64_t page, unsigned block);
  std::uint64_t block_counter(std::uint64_t page, unsigned block) const;
  std::uint64_t root(std::uint64_t slot) const { return root_.at(slot); }
  std::array<std::uint8_t, 64> image(unsigned level, std::uint64_t index, const Key& mac_key) const;

 private:
  struct Node {
    std::uint64_t major = 0;
    std::vector<std::uint64_t> minors;
  };
  void bump(Node& n, std::uint64_t slot, unsigned bits);
  std::uint64_t counter_of(unsigned level, std::uint64_t index) const;

  std::vector<std::vector<Node>> levels_;
  std::vector<unsigned> arity_;  // children per node at each level
  std::vector<unsigned> bits_;
  std::vector<std::uint64_t> root_;
};

struct CheckResult {
  std::uint64_t checked = 0;
  std::uint64_t mismatches = 0;
};

// Every stored node, every root counter and every block MAC of `epc`.
CheckResult check_merkle(const secscale::ProtectedEpc& epc, const secscale::EmulatedDram& dram,
                         const MerkleModel& model, const Key& mac_key);

// Every stored forest MAC of every initialized region, rebuilt from the eEPC
// ciphertext and the Key Table. Regions with a zero top must hold no keys.
CheckResult check_forest(secscale::EpcManager& mgr, const secscale::EmulatedDram& dram);

}  // namespace oracle
