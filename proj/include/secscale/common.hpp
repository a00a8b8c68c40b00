#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace secscale {

using Cycle = std::uint64_t;
using EnclaveId = std::uint32_t;

inline constexpr std::uint64_t kPageSize = 4096;
inline constexpr std::uint64_t kBlockSize = 64;
inline constexpr unsigned kBlocksPerPage = 64;
inline constexpr unsigned kMaxAddressBits = 39;
inline constexpr std::uint64_t kMaxPhysSize = std::uint64_t{1} << kMaxAddressBits;

using Block = std::array<std::uint8_t, kBlockSize>;
using PageBytes = std::array<std::uint8_t, kPageSize>;

struct PageNum {
  std::uint64_t value{};
  constexpr auto operator<=>(const PageNum&) const = default;
};

struct PhysAddr {
  std::uint64_t value{};

  constexpr PageNum page() const { return {value >> 12}; }
  constexpr unsigned block_in_page() const { return static_cast<unsigned>((value >> 6) & 63); }
  constexpr std::uint64_t page_offset() const { return value & (kPageSize - 1); }
  constexpr PhysAddr operator+(std::uint64_t off) const { return {value + off}; }
  constexpr auto operator<=>(const PhysAddr&) const = default;
};

constexpr PhysAddr page_base(PageNum p) { return {p.value << 12}; }
constexpr PhysAddr block_addr(PageNum p, unsigned b) { return {(p.value << 12) + b * kBlockSize}; }

class LayoutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key_path, const std::string& what)
      : std::runtime_error(key_path.empty() ? what : key_path + ": " + what),
        key_path_(std::move(key_path)),
        message_(what) {}
  const std::string& key_path() const { return key_path_; }
  // The diagnostic without the key path.
  const std::string& message() const { return message_; }

 private:
  std::string key_path_;
  std::string message_;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

enum class SecurityEventKind : std::uint8_t {
  MerkleMacMismatch,
  EpcBlockMacMismatch,
  ForestMacMismatch,
  MappingViolation,
  CrossEnclaveMapping,
};

std::string to_string(SecurityEventKind kind);

// Terminal integrity/authenticity violation. The run halts when one is raised.
class CatastrophicFailure : public std::runtime_error {
 public:
  CatastrophicFailure(SecurityEventKind kind, std::uint64_t page, const std::string& detail,
                      std::uint64_t speculative_instructions = 0)
      : std::runtime_error(to_string(kind) + " (page " + std::to_string(page) + "): " + detail),
        kind_(kind),
        page_(page),
        detail_(detail),
        speculative_instructions_(speculative_instructions) {}

  SecurityEventKind kind() const { return kind_; }
  std::uint64_t page() const { return page_; }
  const std::string& detail() const { return detail_; }
  std::uint64_t speculative_instructions() const { return speculative_instructions_; }

  CatastrophicFailure with_speculation(std::uint64_t instructions) const {
    return {kind_, page_, detail_, instructions};
  }

 private:
  SecurityEventKind kind_;
  std::uint64_t page_;
  std::string detail_;
  std::uint64_t speculative_instructions_;
};

}  // namespace secscale
