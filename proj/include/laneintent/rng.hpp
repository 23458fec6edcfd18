#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

#include "laneintent/domain.hpp"

namespace laneintent {

/// SplitMix64 finalizer. Used to derive independent stream seeds from a base
/// seed and a stable index so results never depend on scheduling.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr Seed derive_seed(Seed base, std::uint64_t stream) {
  return Seed{mix64(base.value ^ mix64(stream + 0x632be59bd9b4e019ULL))};
}

constexpr Seed derive_seed(Seed base, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(base, a), b);
}

/// Seeded generator with platform-independent draws. The standard
/// distributions are implementation-defined, so the few we need live here.
class Rng {
 public:
  explicit Rng(Seed seed) : engine_(seed.value) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t index(std::uint64_t n) {
    // Lemire's nearly divisionless method.
    unsigned __int128 m = static_cast<unsigned __int128>(engine_()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(engine_()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Box-Muller; one pair of uniforms per draw keeps the stream layout simple.
  double normal(double mean, double stddev);

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace laneintent
