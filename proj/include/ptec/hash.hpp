#pragma once

#include <cstdint>
#include <cstring>
#include <string>

namespace ptec {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s,
                             std::uint64_t h = kFnvOffset) {
  return fnv1a64(s.data(), s.size(), h);
}

inline std::uint64_t hash_u64(std::uint64_t v, std::uint64_t h = kFnvOffset) {
  unsigned char buf[8];
  std::memcpy(buf, &v, 8);
  return fnv1a64(buf, 8, h);
}

/// Deterministic seed derivation for sub-streams (epoch plans, per-source
/// batch resampling, round seeds). Order of mixing is part of the contract.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a,
                              std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t h = hash_u64(seed);
  h = hash_u64(a, h);
  h = hash_u64(b, h);
  h = hash_u64(c, h);
  return h;
}

inline std::string hex_digest(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace ptec
