// SPDX-License-Identifier: Apache-2.0
#include "mait/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mait/numerics/errors.hpp"

namespace mait {

namespace {

double eval_scalar(const ScalarFn& f, const Tensor& x) {
  Var out = f(Var::constant(x));
  if (out.value().numel() != 1) {
    throw ContractError("grad_check: function output has shape " +
                        shape_string(out.shape()) + ", expected a scalar");
  }
  return out.value()[0];
}

}  // namespace

double grad_check(const ScalarFn& f, const Tensor& x, std::span<const std::size_t> coords,
                  double step) {
  Var input = Var::leaf(x);
  Var out = f(input);
  if (out.value().numel() != 1) {
    throw ContractError("grad_check: function output has shape " +
                        shape_string(out.shape()) + ", expected a scalar");
  }
  backward(out);
  const Tensor analytic = input.grad();

  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i : coords) {
    if (i >= x.numel()) throw IndexError("grad_check: coordinate out of range");
    const double orig = probe[i];
    probe[i] = orig + step;
    const double up = eval_scalar(f, probe);
    probe[i] = orig - step;
    const double down = eval_scalar(f, probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

double grad_check(const ScalarFn& f, const Tensor& x, double step) {
  std::vector<std::size_t> all(x.numel());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return grad_check(f, x, all, step);
}

}  // namespace mait
