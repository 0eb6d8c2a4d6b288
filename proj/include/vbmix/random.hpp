#pragma once

// Seedable, splittable pseudo-random streams.
//
// Every stream is a std::mt19937_64 seeded from a 64-bit key. Child keys are derived by
// mixing (parent seed, FNV-1a hash of a purpose tag, index) through SplitMix64, so
// parallel replicates never share generator state and results do not depend on the
// order in which streams are created.

#include <cstdint>
#include <random>
#include <string_view>

namespace vbmix {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view tag) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Stable child seed for (seed, tag, index).
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag,
                                           std::uint64_t index = 0) noexcept {
  return splitmix64(splitmix64(seed ^ fnv1a(tag)) + splitmix64(index + 0x632BE59BD9B4E019ULL));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, tag, index));
}

}  // namespace vbmix
