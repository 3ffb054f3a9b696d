// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mait/numerics/tensor.hpp"

namespace mait {

/// Seeded generator with platform-independent transforms. The standard
/// distributions are implementation-defined, so sampling is done here on
/// top of the raw mt19937_64 stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Derives an independent stream from (seed, a, b) via splitmix mixing.
  static Rng derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  /// Normal(0, sigma) resampled into [-2 sigma, 2 sigma].
  double trunc_normal(double sigma);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

  Tensor trunc_normal_tensor(Shape shape, double sigma);
  Tensor normal_tensor(Shape shape, double sigma = 1.0);
  Tensor uniform_tensor(Shape shape, double lo, double hi);

 private:
  std::mt19937_64 engine_;
};

}  // namespace mait
