#pragma once

#include <cstdint>

namespace dpnpose {

/// SplitMix64 (Steele, Lea, Flood 2014). The integer stream is the only
/// source of randomness in the project, so results port bit-exactly:
///
///   state += 0x9E3779B97F4A7C15
///   z = state
///   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///   return z ^ (z >> 31)
///
/// uniform() takes the top 53 bits: (next() >> 11) * 2^-53.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  // Independent stream keyed by (seed, stream): the generator is seeded with
  // mix(seed ^ mix(stream + 1)), where mix is one SplitMix64 output step.
  SplitMix64(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next();
  // [0, 1)
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Integer in [lo, hi], by modulo reduction of next().
  int uniform_int(int lo, int hi);
  // Standard normal via Box-Muller on two uniforms, no caching.
  double normal();

  static std::uint64_t mix(std::uint64_t x);

 private:
  std::uint64_t state_;
};

}  // namespace dpnpose
