#pragma once

#include <cstdint>
#include <random>

namespace fedmogp {

// splitmix64 finalizer; decorrelates nearby integer seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed and a stream tag
// (client index, round index, purpose constant, ...).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  return mix64(mix64(base) ^ mix64(tag));
}

inline std::mt19937_64 make_engine(std::uint64_t seed) {
  return std::mt19937_64(mix64(seed));
}

}  // namespace fedmogp
