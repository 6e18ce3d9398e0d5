#pragma once

#include <cstdint>
#include <random>

namespace metampc {

// splitmix64 step; used to derive independent seed streams from a base seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic seed for a sub-stream, e.g. mix_seed(base, trial, kTagNoise).
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(splitmix64(base ^ splitmix64(a)) ^ splitmix64(b));
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(splitmix64(seed)); }

// Stream tags keep unrelated draws decoupled from one another.
enum SeedTag : std::uint64_t {
  kTagInit = 0x11,
  kTagNoise = 0x22,
  kTagTask = 0x33,
  kTagEpisode = 0x44,
  kTagExcitation = 0x55,
  kTagInitialState = 0x66,
  kTagMetaTrain = 0x77,
  kTagTrial = 0x88,
};

}  // namespace metampc
