// SPDX-License-Identifier: Apache-2.0
#include "mait/numerics/rng.hpp"

#include <cmath>
#include <numbers>

namespace mait {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Rng Rng::derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return Rng(splitmix(splitmix(splitmix(seed) ^ a) ^ (b * 0x2545f4914f6cdd1dULL)));
}

std::uint64_t Rng::below(std::uint64_t n) {
  // Rejection sampling keeps the draw exactly uniform.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t v;
  do {
    v = engine_();
  } while (v >= limit);
  return v % n;
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::trunc_normal(double sigma) {
  for (;;) {
    const double z = normal();
    if (std::abs(z) <= 2.0) return z * sigma;
  }
}

Tensor Rng::trunc_normal_tensor(Shape shape, double sigma) {
  Tensor t(std::move(shape));
  for (double& v : t.storage()) v = trunc_normal(sigma);
  return t;
}

Tensor Rng::normal_tensor(Shape shape, double sigma) {
  Tensor t(std::move(shape));
  for (double& v : t.storage()) v = normal() * sigma;
  return t;
}

Tensor Rng::uniform_tensor(Shape shape, double lo, double hi) {
  Tensor t(std::move(shape));
  for (double& v : t.storage()) v = uniform(lo, hi);
  return t;
}

}  // namespace mait
