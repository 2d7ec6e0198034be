#pragma once

#include <cassert>
#include <cstdint>

namespace amd {

/// Portable 64-bit generator (SplitMix64). One multiply-xor-shift finalizer
/// per draw, 64-bit state, identical output on every platform. All randomness
/// in this project flows through explicit streams derived from a root seed so
/// runs reproduce bit-for-bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) with 53 random mantissa bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [lo, hi] inclusive. Rejection sampling, no modulo bias.
  int next_int(int lo, int hi) {
    assert(lo <= hi);
    const std::uint64_t span = static_cast<std::uint64_t>(static_cast<std::int64_t>(hi) -
                                                          static_cast<std::int64_t>(lo) + 1);
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % span);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return static_cast<int>(static_cast<std::int64_t>(lo) + static_cast<std::int64_t>(x % span));
  }

  /// Uniform double in [lo, hi).
  double next_range(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

 private:
  std::uint64_t state_;
};

/// Purpose tags for independent substreams.
enum class Stream : std::uint64_t {
  InstanceGen = 1,
  ParamInit = 2,
  Sampling = 3,
  TrainInstances = 4,
  EvalInstances = 5,
  EvalSampling = 6,
  CoordinateSample = 7,
};

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Derives the state for stream (seed, tag, i0, i1). Each word is folded in
/// with a distinct odd constant so neighbouring indices land far apart.
inline std::uint64_t derive_seed(std::uint64_t seed, Stream tag, std::uint64_t i0 = 0,
                                 std::uint64_t i1 = 0) {
  std::uint64_t h = mix64(seed + 0x9E3779B97F4A7C15ull);
  h = mix64(h ^ (static_cast<std::uint64_t>(tag) * 0xBF58476D1CE4E5B9ull + 1));
  h = mix64(h ^ (i0 * 0x94D049BB133111EBull + 1));
  h = mix64(h ^ (i1 * 0xD6E8FEB86659FD93ull + 1));
  return h;
}

inline Rng make_stream(std::uint64_t seed, Stream tag, std::uint64_t i0 = 0, std::uint64_t i1 = 0) {
  return Rng(derive_seed(seed, tag, i0, i1));
}

}  // namespace amd
