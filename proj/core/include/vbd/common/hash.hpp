#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace vbd {

/// SplitMix64 finalizer. Used for keyed, order-independent pseudo-random
/// values (pixel noise, derived seeds).
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(a ^ (mix64(b) + 0x632be59bd9b4e019ULL));
}

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit value.
constexpr double unit_from_bits(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Derives an independent seed for a named sub-stream.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream);

/// Lower-case hex SHA-256 of a byte buffer / string.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

/// Incremental SHA-256, for hashing large corpora without concatenating them.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::string_view text);
  void update(std::span<const std::uint8_t> bytes);
  std::string hex_digest();

 private:
  void* ctx_;
};

}  // namespace vbd
