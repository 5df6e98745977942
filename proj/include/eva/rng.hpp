// SPDX-License-Identifier: Apache-2.0
//
// Reproducible randomness. The engine is std::mt19937_64 (bit-exact across
// standard libraries); the conversions to real numbers are spelled out here
// because the std:: distributions are implementation-defined.
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>

namespace eva::rng {

using Engine = std::mt19937_64;

/// SplitMix64 finalizer, used to derive independent seeds.
constexpr std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
  return mix(mix(seed) ^ stream);
}

/// Uniform in [0, 1) from the top 53 bits.
inline double uniform(Engine& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

/// Uniform integer in [0, n), n > 0, by scaling uniform().
inline std::uint64_t below(Engine& g, std::uint64_t n) {
  const auto k = static_cast<std::uint64_t>(uniform(g) * static_cast<double>(n));
  return k < n ? k : n - 1;
}

/// Standard normal by Box-Muller (cosine branch only; one draw per call).
inline double normal(Engine& g) {
  const double u1 = 1.0 - uniform(g);  // (0, 1]
  const double u2 = uniform(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace eva::rng
