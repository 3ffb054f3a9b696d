// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "mait/numerics/autograd.hpp"

namespace mait {

using ScalarFn = std::function<Var(const Var&)>;

/// Compares the reverse-mode gradient of `f` at `x` with central
/// differences. Returns max_i |analytic_i - numeric_i| / max(1, |analytic_i|).
/// `f` must return a single-element variable (ContractError otherwise).
double grad_check(const ScalarFn& f, const Tensor& x, double step = 1e-5);

/// Same, restricted to the listed flat coordinates of `x`.
double grad_check(const ScalarFn& f, const Tensor& x, std::span<const std::size_t> coords,
                  double step = 1e-5);

}  // namespace mait
