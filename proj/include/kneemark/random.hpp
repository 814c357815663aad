#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace kneemark {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Order-sensitive hash of a key tuple, e.g. (master seed, epoch, sample index).
inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = 0x2545F4914F6CDD1DULL;
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k));
  return h;
}

inline std::mt19937_64 stream_rng(std::initializer_list<std::uint64_t> keys) { return std::mt19937_64(mix_seed(keys)); }

// Uniform draw on [lo, hi]; returns lo exactly when the range is empty.
inline double uniform_in(std::mt19937_64& rng, double lo, double hi) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return lo + (hi - lo) * u;
}

}  // namespace kneemark
