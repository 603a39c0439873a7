#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace grusm {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent seed from a base seed and a path of indices, e.g.
// (run seed, generation, assembly, trial). Distinct paths give unrelated streams.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(base);
  for (auto p : path) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

// Stream tags keep derived seeds for different purposes apart.
namespace stream {
inline constexpr std::uint64_t kEvaluation = 1;
inline constexpr std::uint64_t kEpsilonRepeat = 2;
inline constexpr std::uint64_t kEvolution = 3;
inline constexpr std::uint64_t kRandomSource = 4;
inline constexpr std::uint64_t kRetry = 5;
inline constexpr std::uint64_t kPolicy = 6;
}  // namespace stream

}  // namespace grusm
