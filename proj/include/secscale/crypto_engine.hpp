#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <span>

#include "secscale/common.hpp"

namespace secscale {

using Random128 = std::array<std::uint8_t, 16>;
using Key256 = std::array<std::uint8_t, 32>;
using WrappedKey = std::array<std::uint8_t, 16>;
using Digest256 = std::array<std::uint8_t, 32>;

inline constexpr unsigned kEnclaveIdBits = 31;
inline constexpr unsigned kPageAddrBits = 27;
inline constexpr unsigned kBlockAddrBits = 6;

// 256-bit AES key for eEPC pages. Packed most-significant first as
//   hw_key(64) | enclave_id(31) | random(128) | page_addr(27) | block_addr(6).
// The page form K always has block_addr == 0.
struct PageKey {
  std::uint64_t hw_key = 0;
  std::uint32_t enclave_id = 0;
  Random128 random{};
  std::uint32_t page_addr = 0;
  std::uint8_t block_addr = 0;

  Key256 bytes() const;
  static PageKey unpack(const Key256& packed);
  bool operator==(const PageKey&) const = default;
};

// System-specific key: a second device key and the boot time. Lives in TCB registers only.
struct Ssk {
  Random128 device_key2{};
  Random128 boot_time{};

  Key256 bytes() const;
};

struct Mac {
  std::uint64_t value = 0;
  bool operator==(const Mac&) const = default;
};

PageKey compose_page_key(std::uint64_t hw_key, std::uint32_t enclave_id, const Random128& random,
                         std::uint32_t page_addr);
PageKey derive_block_key(const PageKey& page_key, unsigned block);

// A 64-byte memory block is four AES-256 blocks under the same block key.
Block ecb_encrypt_block(const PageKey& block_key, const Block& plaintext);
Block ecb_decrypt_block(const PageKey& block_key, const Block& ciphertext);

// Counter-mode for the EPC; the keystream depends on (page, block, counter).
Block ctr_encrypt_block(const Key256& region_key, PageNum page, unsigned block, std::uint64_t counter,
                        const Block& plaintext);
inline Block ctr_decrypt_block(const Key256& region_key, PageNum page, unsigned block,
                               std::uint64_t counter, const Block& ciphertext) {
  return ctr_encrypt_block(region_key, page, block, counter, ciphertext);
}

Mac page_mac(const PageKey& page_key, std::span<const std::uint8_t, kPageSize> page);
// Parent MAC over `arity` children. The node position is bound into the MAC so
// that nodes cannot be relocated.
Mac level_mac(const Ssk& ssk, std::span<const Mac> children, std::size_t arity, unsigned level,
              std::uint64_t node_index);

WrappedKey wrap_key(const Ssk& ssk, const PageKey& page_key);
Random128 unwrap_key(const Ssk& ssk, const WrappedKey& wrapped);

Digest256 sha256(std::span<const std::uint8_t> data);
Digest256 hmac_sha256(std::span<const std::uint8_t> key,
                      std::initializer_list<std::span<const std::uint8_t>> parts);
// HMAC-SHA256 truncated to 64 bits.
Mac keyed_mac(const Key256& key, std::initializer_list<std::span<const std::uint8_t>> parts);

// Raw AES-256 on one 16-byte block, exposed for known-answer tests.
std::array<std::uint8_t, 16> aes256_encrypt(const Key256& key, const std::array<std::uint8_t, 16>& in);

enum class KeySource : std::uint8_t { Prng, GlobalCounter };

// Deterministic AES-CTR generator seeded from the boot time and the hardware key.
class Prng {
 public:
  Prng(const Random128& boot_time, std::uint64_t hw_key, KeySource source = KeySource::Prng);

  Random128 next128();
  std::uint64_t draws() const { return draws_; }

 private:
  Key256 key_{};
  KeySource source_;
  std::uint64_t draws_ = 0;
};

}  // namespace secscale
