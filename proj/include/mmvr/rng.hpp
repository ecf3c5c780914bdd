#pragma once

#include <cstdint>
#include <random>

namespace mmvr {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent streams from (seed, index).
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline Rng make_stream(std::uint64_t seed, std::uint64_t index = 0) {
  return Rng(mix_seed(mix_seed(seed) ^ (index * 0xd1b54a32d192ed03ULL)));
}

}  // namespace mmvr
