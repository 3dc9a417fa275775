#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>

namespace faim {

/// xoshiro256** (Blackman & Vigna), seeded through splitmix64. Used for every
/// random draw in the library so runs are reproducible across platforms; the
/// standard <random> distributions are implementation-defined and are avoided.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  /// Independent generator keyed by (seed, a, b), e.g. (seed, sample, channel).
  static Rng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller.
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::array<std::uint64_t, 4> s_{};
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace faim
