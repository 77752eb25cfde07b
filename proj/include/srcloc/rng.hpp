#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace srcloc {

using Engine = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Substream seed for `index` under `master`: mix64(master ^ mix64(index)).
/// Multiple indices are folded left to right, so derive_seed(s, {a, b}) ==
/// derive_seed(derive_seed(s, {a}), {b}).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = master;
  for (auto index : path) s = mix64(s ^ mix64(index));
  return s;
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Engine& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace srcloc
