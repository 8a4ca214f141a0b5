// Counter-based deterministic random numbers.
//
// Every random draw in the project is a pure function of a 64-bit key built
// from (run seed, stream, and up to three counters). There is no mutable RNG
// state, so sampling order is irrelevant and snapshot/resume reproduces the
// exact noise sequence of an uninterrupted run.
#pragma once

#include <cstdint>

#include "taper/common.hpp"

namespace taper {

// Stream ids keep independent uses of the same seed decorrelated.
enum class RngStream : uint64_t {
  weight_init = 1,
  gate_noise = 2,
  batch_sample = 3,
  dataset = 4,
  test = 200,
};

namespace detail {
// splitmix64 finalizer; good avalanche, stable across platforms.
inline uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
}  // namespace detail

inline uint64_t rng_bits(uint64_t seed, RngStream stream, uint64_t a = 0, uint64_t b = 0,
                         uint64_t c = 0) {
  uint64_t h = detail::mix64(seed ^ 0x5851f42d4c957f2dull);
  h = detail::mix64(h ^ static_cast<uint64_t>(stream));
  h = detail::mix64(h ^ a);
  h = detail::mix64(h ^ b);
  h = detail::mix64(h ^ c);
  return h;
}

// Uniform in [0, 1), 53-bit resolution.
inline double rng_uniform(uint64_t seed, RngStream stream, uint64_t a = 0, uint64_t b = 0,
                          uint64_t c = 0) {
  return static_cast<double>(rng_bits(seed, stream, a, b, c) >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller on two decorrelated uniforms.
inline double rng_normal(uint64_t seed, RngStream stream, uint64_t a = 0, uint64_t b = 0,
                         uint64_t c = 0) {
  double u1 = rng_uniform(seed, stream, a, b, c ^ 0x517cc1b727220a95ull);
  double u2 = rng_uniform(seed, stream, a, b, c ^ 0x6c62272e07bb0142ull);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

// Uniform integer in [0, n).
inline uint64_t rng_index(uint64_t n, uint64_t seed, RngStream stream, uint64_t a = 0,
                          uint64_t b = 0, uint64_t c = 0) {
  return static_cast<uint64_t>(rng_uniform(seed, stream, a, b, c) * static_cast<double>(n));
}

}  // namespace taper
