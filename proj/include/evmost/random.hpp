#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace evmost {

/// Seeded generator used everywhere randomness is needed.
///
/// Built on std::mt19937_64, whose output sequence is fixed by the standard.
/// Uniform and Gaussian draws are derived here rather than through the
/// implementation-defined std distributions, so fixtures reproduce across
/// standard libraries:
///   uniform01  = (x >> 11) * 2^-53, x the next 64-bit output
///   normal     = Box-Muller on (u1, u2) with u1 = 1 - uniform01 in (0, 1]:
///                r = sqrt(-2 ln u1), returns r cos(2 pi u2), then r sin(2 pi u2)
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  /// Uniform integer in [0, n), by rejection. n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace evmost
