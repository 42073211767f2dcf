#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "brightvae/tensor.hpp"

namespace brightvae {

/// Seeded RNG used for parameter init and synthetic data. Gaussian samples go
/// through Box-Muller on top of the raw engine so sequences do not depend on
/// the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  /// Derive an independent stream, e.g. per epoch or per image.
  static Rng derive(uint64_t seed, uint64_t stream) {
    std::seed_seq seq{seed, stream ^ uint64_t{0x9e3779b97f4a7c15}};
    std::mt19937_64 e(seq);
    Rng r(0);
    r.engine_ = e;
    return r;
  }

  double uniform(double lo = 0.0, double hi = 1.0) {
    // 53-bit mantissa fraction in [0, 1).
    double u = static_cast<double>(engine_() >> 11) * (1.0 / 9007199254740992.0);
    return lo + (hi - lo) * u;
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return mean + stddev * r * std::cos(2.0 * M_PI * u2);
  }

  uint64_t next_u64() { return engine_(); }

  int64_t uniform_int(int64_t lo, int64_t hi_inclusive) {
    std::uniform_int_distribution<int64_t> d(lo, hi_inclusive);
    return d(engine_);
  }

  template <typename T>
  void fill_normal(Tensor<T>& t, double mean, double stddev) {
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(normal(mean, stddev));
  }

  template <typename T>
  void fill_uniform(Tensor<T>& t, double lo, double hi) {
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(uniform(lo, hi));
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace brightvae
