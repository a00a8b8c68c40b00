#include <set>
#include <string>

#include "doctest.h"
#include "oracle.hpp"
#include "secscale/crypto_engine.hpp"

using namespace secscale;

namespace {

std::vector<std::uint8_t> unhex(const std::string& h) {
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < h.size(); i += 2) out.push_back(static_cast<std::uint8_t>(std::stoi(h.substr(i, 2), nullptr, 16)));
  return out;
}

std::string hex(std::span<const std::uint8_t> b) {
  static const char* d = "0123456789abcdef";
  std::string s;
  for (auto x : b) {
    s += d[x >> 4];
    s += d[x & 15];
  }
  return s;
}

std::span<const std::uint8_t> str(const std::string& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

PageKey sample_key(std::uint32_t page = 12345) {
  Random128 r;
  for (unsigned i = 0; i < 16; ++i) r[i] = static_cast<std::uint8_t>(0xa0 + i);
  return compose_page_key(0x0123456789abcdefull, 0x7fffffff, r, page);
}

}  // namespace

TEST_CASE("aes-256 matches the FIPS-197 example") {
  Key256 k;
  for (unsigned i = 0; i < 32; ++i) k[i] = static_cast<std::uint8_t>(i);
  std::array<std::uint8_t, 16> pt;
  const auto p = unhex("00112233445566778899aabbccddeeff");
  std::copy(p.begin(), p.end(), pt.begin());
  CHECK(hex(aes256_encrypt(k, pt)) == "8ea2b7ca516745bfeafc49904b496089");
}

TEST_CASE("hmac-sha256 matches RFC 4231 cases 1 and 2") {
  const std::vector<std::uint8_t> k1(20, 0x0b);
  CHECK(hex(hmac_sha256(k1, {str("Hi There")})) ==
        "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7");
  CHECK(hex(hmac_sha256(str("Jefe"), {str("what do ya want "), str("for nothing?")})) ==
        "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843");
}

TEST_CASE("sha256 of abc") {
  CHECK(hex(sha256(str("abc"))) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("page key packing is msb-first and round-trips") {
  const PageKey k = derive_block_key(sample_key(), 37);
  const Key256 packed = k.bytes();
  CHECK(packed == oracle::pack_key(k.hw_key, k.enclave_id, k.random, k.page_addr, 37));
  CHECK(PageKey::unpack(packed) == k);
  // hw key occupies the first 8 bytes big-endian.
  CHECK(packed[0] == 0x01);
  CHECK(packed[7] == 0xef);
  CHECK((packed[31] & 0x3f) == 37);
}

TEST_CASE("page key fields are range checked") {
  const Random128 r{};
  CHECK_THROWS_AS(compose_page_key(0, 1u << 31, r, 0), DomainError);
  CHECK_THROWS_AS(compose_page_key(0, 1, r, 1u << 27), DomainError);
  CHECK_THROWS_AS(derive_block_key(sample_key(), 64), DomainError);
}

TEST_CASE("block encryption is four ecb blocks under the block key") {
  const PageKey bk = derive_block_key(sample_key(), 5);
  Block pt;
  for (unsigned i = 0; i < pt.size(); ++i) pt[i] = static_cast<std::uint8_t>(i * 7);
  const Block ct = ecb_encrypt_block(bk, pt);
  Block expect;
  oracle::aes256_ecb(oracle::pack_key(bk.hw_key, bk.enclave_id, bk.random, bk.page_addr, 5), pt.data(),
                     expect.data(), pt.size(), true);
  CHECK(ct == expect);
  CHECK(ecb_decrypt_block(bk, ct) == pt);
  CHECK(ecb_encrypt_block(derive_block_key(sample_key(), 6), pt) != ct);
}

TEST_CASE("counter mode depends on page, block and counter") {
  Key256 k{};
  k[3] = 9;
  Block pt{};
  pt[0] = 1;
  const Block c = ctr_encrypt_block(k, PageNum{4}, 2, 10, pt);
  CHECK(ctr_decrypt_block(k, PageNum{4}, 2, 10, c) == pt);
  CHECK(ctr_encrypt_block(k, PageNum{4}, 2, 11, pt) != c);
  CHECK(ctr_encrypt_block(k, PageNum{5}, 2, 10, pt) != c);
  CHECK(ctr_encrypt_block(k, PageNum{4}, 3, 10, pt) != c);
}

TEST_CASE("page and level MACs follow the documented byte layout") {
  PageBytes page{};
  for (unsigned i = 0; i < page.size(); ++i) page[i] = static_cast<std::uint8_t>(i ^ 0x33);
  const PageKey k = sample_key();
  CHECK(page_mac(k, page).value == oracle::hmac64(k.bytes(), page));

  Ssk ssk;
  ssk.device_key2[0] = 1;
  ssk.boot_time[15] = 2;
  std::vector<Mac> children{{1}, {2}, {3}, {4}};
  std::vector<std::uint8_t> msg(12 + 32, 0);
  msg[0] = 9;  // node index 9, little-endian
  msg[8] = 2;  // level
  for (unsigned i = 0; i < 4; ++i) msg[12 + 8 * i] = static_cast<std::uint8_t>(i + 1);
  CHECK(level_mac(ssk, children, 4, 2, 9).value == oracle::hmac64(ssk.bytes(), msg));
  CHECK(level_mac(ssk, children, 4, 2, 10) != level_mac(ssk, children, 4, 2, 9));
  CHECK(level_mac(ssk, children, 4, 1, 9) != level_mac(ssk, children, 4, 2, 9));
  CHECK_THROWS_AS(level_mac(ssk, children, 8, 1, 0), DomainError);
}

TEST_CASE("key wrapping round-trips under the ssk") {
  Ssk ssk;
  ssk.boot_time[0] = 0x42;
  const PageKey k = sample_key();
  const WrappedKey w = wrap_key(ssk, k);
  CHECK(w != k.random);
  CHECK(unwrap_key(ssk, w) == k.random);
  Ssk other = ssk;
  other.boot_time[0] = 0x43;
  CHECK(unwrap_key(other, w) != k.random);
}

TEST_CASE("prng is deterministic per boot and never repeats over a run") {
  Random128 boot{};
  boot[0] = 7;
  Prng a(boot, 99), b(boot, 99), c(boot, 100);
  std::set<Random128> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto x = a.next128();
    CHECK(x == b.next128());
    seen.insert(x);
  }
  CHECK(seen.size() == 2000);
  CHECK(a.draws() == 2000);
  Prng a2(boot, 99);
  CHECK(c.next128() != a2.next128());
  Prng g1(boot, 99, KeySource::GlobalCounter), g2(boot, 99, KeySource::GlobalCounter);
  const auto first = g1.next128();
  CHECK(first == g2.next128());
  CHECK(first != g1.next128());
}
