#pragma once

// Seeded randomness. All streams derive from one run seed: stream `i` uses
// splitmix64(seed + i * 0x9E3779B97F4A7C15) as the seed of a 64-bit
// Mersenne Twister. Distributions are implemented here rather than taken
// from <random> so that outputs do not depend on the standard library.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace sensia {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed + stream * 0x9E3779B97F4A7C15ULL);
}

// Named streams so that adding a consumer does not shift the others.
enum class Stream : std::uint64_t {
  kInit = 1,
  kBatchOrder = 2,
  kSynthetic = 3,
  kFilterSampling = 4,
  kBootstrap = 5,
  kSubsample = 6,
  kSplit = 7,
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, Stream stream)
      : engine_(derive_seed(seed, static_cast<std::uint64_t>(stream))) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), rejection sampled to avoid modulo bias.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // Box-Muller; the second variate is discarded to keep the stream simple.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) *
                      std::cos(2.0 * std::numbers::pi * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sensia
