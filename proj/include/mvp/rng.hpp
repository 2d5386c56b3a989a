#pragma once

#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

namespace mvp {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream key from (seed, frame, item).
constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t frame, std::uint64_t item) {
  std::uint64_t h = mix64(seed + 0x9E3779B97F4A7C15ULL);
  h = mix64(h ^ (frame + 0x632BE59BD9B4E019ULL));
  h = mix64(h ^ (item + 0x85EBCA77C2B2AE63ULL));
  return h;
}

/// Counter-based generator: output i is mix64(key + (i+1)·γ). Satisfies
/// UniformRandomBitGenerator, so it plugs into <random> distributions.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key) : key_(key) {}
  CounterRng(std::uint64_t seed, std::uint64_t frame, std::uint64_t item)
      : key_(stream_key(seed, frame, item)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    ++counter_;
    return mix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
  }

  /// Unbiased integer in [0, bound) (Lemire's multiply-and-reject).
  std::uint64_t below(std::uint64_t bound) {
    unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<unsigned __int128>((*this)()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Draws min(k, n) distinct indices of [0, n) uniformly without replacement
/// using a partial Fisher–Yates shuffle. Returned in draw order.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, CounterRng& rng) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  const std::size_t take = k < n ? k : n;
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(take);
  return pool;
}

}  // namespace mvp
