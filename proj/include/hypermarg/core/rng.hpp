#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace hypermarg {

/// Counter-based SplitMix64 generator.
///
/// Draw number `c` of stream `s` under seed `k` is
///
///     key   = mix(k ^ mix(s + 0x632BE59BD9B4E019))
///     bits  = mix(key + (c + 1) * 0x9E3779B97F4A7C15)
///
/// where `mix` is the SplitMix64 finalizer (shifts 30/27/31, multipliers
/// 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB). Uniform doubles take the top
/// 53 bits. Integer-only paths (uniform, rademacher) are bit-identical on
/// every platform; `normal` goes through libm.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream), key_(mix(seed ^ mix(stream + 0x632BE59BD9B4E019ULL))) {}

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t bits(std::uint64_t counter) const {
    return mix(key_ + (counter + 1) * 0x9E3779B97F4A7C15ULL);
  }

  /// Uniform on [0, 1).
  double uniform(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  /// Sign of one uniform draw: +1 when the draw is below 1/2.
  double rademacher(std::uint64_t counter) const { return uniform(counter) < 0.5 ? 1.0 : -1.0; }

  /// Standard normal by Box-Muller over draws 2c and 2c+1.
  double normal(std::uint64_t counter) const {
    const double u1 = 1.0 - uniform(2 * counter);  // (0, 1]
    const double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Independent child generator; children of distinct streams never share draws.
  CounterRng split(std::uint64_t stream) const { return CounterRng(mix(key_ ^ 0xD1B54A32D192ED03ULL) + stream, stream); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
};

}  // namespace hypermarg
