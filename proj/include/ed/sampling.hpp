#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

#include "ed/config.hpp"
#include "ed/error.hpp"

namespace ed {

/// Seeded source for multinomial draws.
///
/// The generator is std::mt19937_64 seeded with the 64-bit config seed; its
/// output sequence is fixed by the C++ standard. A uniform variate is
/// u = (x >> 11) * 2^-53 for each 64-bit output x.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

inline void require_distribution(std::span<const double> p) {
  if (p.empty()) throw InternalError("cannot sample from an empty distribution");
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InternalError("distribution has an invalid entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw InternalError("distribution is not normalized (sum " + std::to_string(total) + ")");
  }
}

/// Greedy picks the lowest-index argmax. Multinomial inverts the CDF at one
/// uniform draw: the first token whose cumulative mass exceeds u.
inline std::size_t sample(std::span<const double> p, Sampling mode, Rng& rng) {
  require_distribution(p);
  if (mode == Sampling::Greedy) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.size(); ++i) {
      if (p[i] > p[best]) best = i;
    }
    return best;
  }

  const double u = rng.uniform();
  double cdf = 0.0;
  std::size_t last_nonzero = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) last_nonzero = i;
    cdf += p[i];
    if (u < cdf) return i;
  }
  // Rounding left the total just below u.
  return last_nonzero;
}

}  // namespace ed
