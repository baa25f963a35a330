#pragma once

// Deterministic random numbers. std::mt19937_64 has a portable stream, but the
// standard distributions don't, so the transforms live here.

#include <cmath>
#include <cstdint>
#include <random>

#include "scm/model.hpp"

namespace scm {

// splitmix64 finalizer; decorrelates per-item substreams derived from one seed
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  // uniform on [0, 1) with 53 random bits
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal(double mean = 0.0, double sigma = 1.0) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + sigma * spare_;
    }
    double u1 = uniform();
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * pi * u2);
    have_spare_ = true;
    return mean + sigma * r * std::cos(2.0 * pi * u2);
  }

  double exponential(double rate) {
    if (rate <= 0.0) throw Error(ErrorKind::ZeroRate, "exponential draw needs rate > 0");
    return -std::log1p(-uniform()) / rate;
  }

  // Knuth for small means, rounded normal above (counts there are >> 1)
  std::int64_t poisson(double mean) {
    if (mean < 0.0) throw Error(ErrorKind::InvalidRequest, "poisson mean must be >= 0");
    if (mean == 0.0) return 0;
    if (mean < 30.0) {
      const double limit = std::exp(-mean);
      std::int64_t k = 0;
      double p = 1.0;
      do {
        ++k;
        p *= uniform();
      } while (p > limit);
      return k - 1;
    }
    const double draw = std::round(normal(mean, std::sqrt(mean)));
    return draw < 0.0 ? 0 : static_cast<std::int64_t>(draw);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace scm
