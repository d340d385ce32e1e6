#pragma once

#include <cstdint>
#include <random>

namespace polyrad {

using Rng = std::mt19937_64;

// splitmix64 finaliser over (master, index). Used wherever independent work
// items need their own stream: Rademacher draws, restarts, sample batches.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace polyrad
