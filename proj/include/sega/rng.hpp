#pragma once

// Counter-based normal generator used for initial latents.
//
// Word i of stream `seed` is splitmix64(splitmix64(seed) + i * 0x9E3779B97F4A7C15).
// A word maps to a uniform in (0, 1) as ((w >> 11) + 0.5) * 2^-53. Normal j
// uses words 2j and 2j+1 with the Box-Muller cosine branch:
//   sqrt(-2 ln u0) * cos(2 pi u1).
// Any element can be generated independently of the others.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace sega::rng {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t word(std::uint64_t seed, std::uint64_t counter) {
  return splitmix64(splitmix64(seed) + counter * 0x9E3779B97F4A7C15ull);
}

constexpr double to_unit_open(std::uint64_t w) {
  return (static_cast<double>(w >> 11) + 0.5) * 0x1.0p-53;
}

inline double normal(std::uint64_t seed, std::uint64_t index) {
  const double u0 = to_unit_open(word(seed, 2 * index));
  const double u1 = to_unit_open(word(seed, 2 * index + 1));
  return std::sqrt(-2.0 * std::log(u0)) * std::cos(2.0 * std::numbers::pi * u1);
}

}  // namespace sega::rng
