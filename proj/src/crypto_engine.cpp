#define OPENSSL_SUPPRESS_DEPRECATED  // SHA256_CTX
#include "secscale/crypto_engine.hpp"

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <cstring>
#include <vector>

namespace secscale {

namespace {

// MSB-first bit packing over four big-endian words.
class BitWriter {
 public:
  explicit BitWriter(Key256& out) : out_(out) {}
  ~BitWriter() {
    for (unsigned i = 0; i < 32; ++i) out_[i] = static_cast<std::uint8_t>(words_[i / 8] >> (56 - 8 * (i % 8)));
  }

  void put(std::uint64_t value, unsigned bits) {
    if (bits < 64) value &= (std::uint64_t{1} << bits) - 1;
    const unsigned w = pos_ / 64;
    const unsigned room = 64 - pos_ % 64;
    if (bits <= room) {
      words_[w] |= bits == 64 ? value : value << (room - bits);
    } else {
      words_[w] |= value >> (bits - room);
      words_[w + 1] |= value << (64 - (bits - room));
    }
    pos_ += bits;
  }
  void put_bytes(const Random128& bytes) {
    for (auto b : bytes) put(b, 8);
  }

 private:
  Key256& out_;
  std::uint64_t words_[4] = {};
  unsigned pos_ = 0;
};

class BitReader {
 public:
  explicit BitReader(const Key256& in) : in_(in) {}

  std::uint64_t get(unsigned bits) {
    std::uint64_t v = 0;
    for (unsigned i = 0; i < bits; ++i, ++pos_)
      v = (v << 1) | ((in_[pos_ / 8] >> (7 - pos_ % 8)) & 1u);
    return v;
  }

 private:
  const Key256& in_;
  unsigned pos_ = 0;
};

void store_le64(std::uint8_t* out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint64_t load_le64(const std::uint8_t* in) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | in[i];
  return v;
}

// AES-256-ECB through EVP so AES-NI is used when present.
void aes256_ecb(const std::uint8_t* key, const std::uint8_t* in, std::uint8_t* out, int len, bool encrypt) {
  struct Ctx {
    EVP_CIPHER_CTX* enc = EVP_CIPHER_CTX_new();
    EVP_CIPHER_CTX* dec = EVP_CIPHER_CTX_new();
    Ctx() {
      EVP_EncryptInit_ex(enc, EVP_aes_256_ecb(), nullptr, nullptr, nullptr);
      EVP_DecryptInit_ex(dec, EVP_aes_256_ecb(), nullptr, nullptr, nullptr);
      EVP_CIPHER_CTX_set_padding(enc, 0);
      EVP_CIPHER_CTX_set_padding(dec, 0);
    }
    ~Ctx() {
      EVP_CIPHER_CTX_free(enc);
      EVP_CIPHER_CTX_free(dec);
    }
  };
  thread_local Ctx ctx;
  thread_local std::uint8_t enc_key[32];
  thread_local std::uint8_t dec_key[32];
  thread_local bool enc_set = false;
  thread_local bool dec_set = false;
  int n = 0;
  if (encrypt) {
    if (!enc_set || std::memcmp(enc_key, key, 32) != 0) {
      EVP_EncryptInit_ex(ctx.enc, nullptr, nullptr, key, nullptr);
      std::memcpy(enc_key, key, 32);
      enc_set = true;
    }
    EVP_EncryptUpdate(ctx.enc, out, &n, in, len);
  } else {
    if (!dec_set || std::memcmp(dec_key, key, 32) != 0) {
      EVP_DecryptInit_ex(ctx.dec, nullptr, nullptr, key, nullptr);
      std::memcpy(dec_key, key, 32);
      dec_set = true;
    }
    EVP_DecryptUpdate(ctx.dec, out, &n, in, len);
  }
}

// Padded-key SHA256 states for recently used HMAC keys.
struct HmacState {
  std::uint8_t k0[64];
  SHA256_CTX inner;
  SHA256_CTX outer;
};

const HmacState& hmac_state(const std::uint8_t* k0) {
  thread_local std::array<HmacState, 8> cache{};
  thread_local std::array<bool, 8> used{};
  thread_local unsigned next = 0;
  for (unsigned i = 0; i < cache.size(); ++i)
    if (used[i] && std::memcmp(cache[i].k0, k0, 64) == 0) return cache[i];
  HmacState& st = cache[next];
  used[next] = true;
  next = (next + 1) % cache.size();
  std::memcpy(st.k0, k0, 64);
  std::uint8_t pad[64];
  for (int i = 0; i < 64; ++i) pad[i] = k0[i] ^ 0x36;
  SHA256_Init(&st.inner);
  SHA256_Update(&st.inner, pad, sizeof pad);
  for (int i = 0; i < 64; ++i) pad[i] = k0[i] ^ 0x5c;
  SHA256_Init(&st.outer);
  SHA256_Update(&st.outer, pad, sizeof pad);
  return st;
}

}  // namespace

Key256 PageKey::bytes() const {
  Key256 out;
  {
    BitWriter w(out);
    w.put(hw_key, 64);
    w.put(enclave_id, kEnclaveIdBits);
    w.put_bytes(random);
    w.put(page_addr, kPageAddrBits);
    w.put(block_addr, kBlockAddrBits);
  }
  return out;
}

PageKey PageKey::unpack(const Key256& packed) {
  BitReader r(packed);
  PageKey k;
  k.hw_key = r.get(64);
  k.enclave_id = static_cast<std::uint32_t>(r.get(kEnclaveIdBits));
  for (auto& b : k.random) b = static_cast<std::uint8_t>(r.get(8));
  k.page_addr = static_cast<std::uint32_t>(r.get(kPageAddrBits));
  k.block_addr = static_cast<std::uint8_t>(r.get(kBlockAddrBits));
  return k;
}

Key256 Ssk::bytes() const {
  Key256 out;
  std::memcpy(out.data(), device_key2.data(), 16);
  std::memcpy(out.data() + 16, boot_time.data(), 16);
  return out;
}

PageKey compose_page_key(std::uint64_t hw_key, std::uint32_t enclave_id, const Random128& random,
                         std::uint32_t page_addr) {
  if (enclave_id >= (1u << kEnclaveIdBits)) throw DomainError("enclave id exceeds 31 bits");
  if (page_addr >= (1u << kPageAddrBits)) throw DomainError("page address exceeds 27 bits");
  return PageKey{hw_key, enclave_id, random, page_addr, 0};
}

PageKey derive_block_key(const PageKey& page_key, unsigned block) {
  if (block >= kBlocksPerPage) throw DomainError("block index must be < 64");
  PageKey k = page_key;
  k.block_addr = static_cast<std::uint8_t>(block);
  return k;
}

std::array<std::uint8_t, 16> aes256_encrypt(const Key256& key, const std::array<std::uint8_t, 16>& in) {
  std::array<std::uint8_t, 16> out;
  aes256_ecb(key.data(), in.data(), out.data(), 16, true);
  return out;
}

Block ecb_encrypt_block(const PageKey& block_key, const Block& plaintext) {
  const Key256 key = block_key.bytes();
  Block out;
  aes256_ecb(key.data(), plaintext.data(), out.data(), kBlockSize, true);
  return out;
}

Block ecb_decrypt_block(const PageKey& block_key, const Block& ciphertext) {
  const Key256 key = block_key.bytes();
  Block out;
  aes256_ecb(key.data(), ciphertext.data(), out.data(), kBlockSize, false);
  return out;
}

Block ctr_encrypt_block(const Key256& region_key, PageNum page, unsigned block, std::uint64_t counter,
                        const Block& plaintext) {
  // Counter block: page(8) | counter(7) | block*4+chunk(1)
  std::uint8_t ctr[kBlockSize];
  for (unsigned chunk = 0; chunk < 4; ++chunk) {
    std::uint8_t* c = ctr + chunk * 16;
    store_le64(c, page.value);
    for (int i = 0; i < 7; ++i) c[8 + i] = static_cast<std::uint8_t>(counter >> (8 * i));
    c[15] = static_cast<std::uint8_t>(block * 4 + chunk);
  }
  std::uint8_t ks[kBlockSize];
  aes256_ecb(region_key.data(), ctr, ks, kBlockSize, true);
  Block out;
  for (unsigned i = 0; i < kBlockSize; ++i) out[i] = plaintext[i] ^ ks[i];
  return out;
}

Digest256 sha256(std::span<const std::uint8_t> data) {
  Digest256 d;
  SHA256(data.data(), data.size(), d.data());
  return d;
}

Digest256 hmac_sha256(std::span<const std::uint8_t> key,
                      std::initializer_list<std::span<const std::uint8_t>> parts) {
  std::uint8_t k0[64] = {};
  if (key.size() > 64) {
    const Digest256 kd = sha256(key);
    std::memcpy(k0, kd.data(), kd.size());
  } else {
    std::memcpy(k0, key.data(), key.size());
  }
  const HmacState& st = hmac_state(k0);
  SHA256_CTX ctx = st.inner;
  for (auto p : parts) SHA256_Update(&ctx, p.data(), p.size());
  Digest256 inner;
  SHA256_Final(inner.data(), &ctx);
  ctx = st.outer;
  SHA256_Update(&ctx, inner.data(), inner.size());
  Digest256 out;
  SHA256_Final(out.data(), &ctx);
  return out;
}

Mac keyed_mac(const Key256& key, std::initializer_list<std::span<const std::uint8_t>> parts) {
  const Digest256 d = hmac_sha256(key, parts);
  return Mac{load_le64(d.data())};
}

Mac page_mac(const PageKey& page_key, std::span<const std::uint8_t, kPageSize> page) {
  return keyed_mac(page_key.bytes(), {page});
}

Mac level_mac(const Ssk& ssk, std::span<const Mac> children, std::size_t arity, unsigned level,
              std::uint64_t node_index) {
  if (children.size() != arity)
    throw DomainError("level_mac expects " + std::to_string(arity) + " children, got " +
                      std::to_string(children.size()));
  std::uint8_t header[12];
  store_le64(header, node_index);
  header[8] = static_cast<std::uint8_t>(level);
  header[9] = header[10] = header[11] = 0;
  std::vector<std::uint8_t> body(children.size() * 8);
  for (std::size_t i = 0; i < children.size(); ++i) store_le64(body.data() + 8 * i, children[i].value);
  return keyed_mac(ssk.bytes(), {std::span<const std::uint8_t>(header), body});
}

WrappedKey wrap_key(const Ssk& ssk, const PageKey& page_key) {
  return aes256_encrypt(ssk.bytes(), page_key.random);
}

Random128 unwrap_key(const Ssk& ssk, const WrappedKey& wrapped) {
  const Key256 key = ssk.bytes();
  Random128 out;
  aes256_ecb(key.data(), wrapped.data(), out.data(), 16, false);
  return out;
}

Prng::Prng(const Random128& boot_time, std::uint64_t hw_key, KeySource source) : source_(source) {
  std::uint8_t seed[24];
  std::memcpy(seed, boot_time.data(), 16);
  store_le64(seed + 16, hw_key);
  key_ = sha256(seed);
}

Random128 Prng::next128() {
  const std::uint64_t n = draws_++;
  std::array<std::uint8_t, 16> block{};
  for (int i = 0; i < 8; ++i) block[15 - i] = static_cast<std::uint8_t>(n >> (8 * i));
  if (source_ == KeySource::GlobalCounter) {
    // A monotone counter never repeats within a boot; the top bit keeps it distinct from zero.
    block[0] = 0x80;
    return block;
  }
  return aes256_encrypt(key_, block);
}

}  // namespace secscale
