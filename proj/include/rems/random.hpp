#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "rems/hash_core.hpp"

namespace rems {

/// Deterministic generator. Only raw mt19937_64 output is consumed, never the
/// standard distributions, so streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n) {
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Exponential variate with the given rate.
  double exponential(double rate) { return -std::log1p(-uniform01()) / rate; }

  template <typename Tag>
  Bytes32<Tag> bytes32() {
    Bytes32<Tag> out;
    for (int word = 0; word < 4; ++word) {
      std::uint64_t v = next();
      for (int i = 0; i < 8; ++i)
        out.bytes[word * 8 + i] = static_cast<std::uint8_t>(v >> (56 - 8 * i));
    }
    return out;
  }

 private:
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer, used to derive independent sub-seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace rems
