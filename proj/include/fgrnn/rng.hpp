// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace fgrnn {

/// 64-bit FNV-1a over a byte string. Used for stream names and run ids.
constexpr std::uint64_t fnv1a64(std::string_view text,
                                std::uint64_t hash = 0xcbf29ce484222325ULL) {
  for (unsigned char ch : text) {
    hash ^= ch;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

/// Counter-based generator: output i of a stream is a pure function of
/// (seed, stream, i), so results do not depend on the platform's <random>
/// distribution implementations. One stream per purpose (init, dropout,
/// batching, ...), keyed by name.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng() = default;
  CounterRng(std::uint64_t seed, std::string_view stream)
      : seed_(seed), stream_(fnv1a64(stream)) {}
  CounterRng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix(seed_ * 0x9e3779b97f4a7c15ULL ^ mix(stream_ + counter_++)); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] (inclusive).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  /// Standard normal via Box-Muller; one cached spare value.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  /// Independent child stream derived from this one's key.
  CounterRng fork(std::string_view name) const { return CounterRng(seed_, mix(stream_ ^ fnv1a64(name))); }

 private:
  static constexpr std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Fisher-Yates with CounterRng (std::shuffle's output is implementation-defined).
template <typename It>
void shuffle(It first, It last, CounterRng& rng) {
  const auto n = static_cast<std::int64_t>(last - first);
  for (std::int64_t i = n - 1; i > 0; --i) {
    const auto j = rng.uniform_int(0, i);
    using std::swap;
    swap(first[i], first[j]);
  }
}

}  // namespace fgrnn
