// Counter-derived random streams.
//
// Every Monte Carlo sample owns one Stream. A stream is fully determined by a
// (master_seed, index) key, so results never depend on which thread ran the
// sample or in which order samples were scheduled.

#pragma once

#include <cstdint>
#include <limits>

namespace htexit {

struct StreamKey {
  std::uint64_t master_seed = 0;
  std::uint64_t index = 0;
};

/// SplitMix64 finalizer; also used to scramble stream keys.
constexpr std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// xoshiro256** engine seeded from a StreamKey. Satisfies
/// UniformRandomBitGenerator, but the project draws uniforms and normals
/// through the member helpers so the bit stream is fixed across standard
/// library implementations.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(StreamKey key);
  Stream(std::uint64_t master_seed, std::uint64_t index)
      : Stream(StreamKey{master_seed, index}) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()();

  /// Uniform on the open interval (0, 1), 53 bits of resolution.
  double uniform();
  /// Standard normal via the Marsaglia polar method (no cached spare).
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  const StreamKey& key() const { return key_; }

 private:
  StreamKey key_;
  std::uint64_t s_[4];
};

/// Derives a child stream for sub-tasks (e.g. a search worker) that must not
/// overlap with the parent's sample streams.
Stream child_stream(const StreamKey& parent, std::uint64_t salt);

}  // namespace htexit
