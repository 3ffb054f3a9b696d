// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mait/numerics/tensor.hpp"

namespace mait {

inline constexpr double kLayerNormEps = 1e-6;

// Plain (non-differentiable) kernels. All reductions accumulate left to right
// in index order, so repeated calls on identical inputs are bit-identical.

/// c = a · b for a[m×k], b[k×n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// c = a · bᵀ for a[m×k], b[n×k].
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// c = aᵀ · b for a[k×m], b[k×n].
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Row-wise softmax with per-row max subtraction.
Tensor softmax_rows(const Tensor& x);

/// Normalizes each row over the last axis, then applies gain and bias.
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 double eps = kLayerNormEps);

/// x·Φ(x) with the exact Gaussian CDF.
Tensor gelu(const Tensor& x);
double gelu(double x);
/// d/dx of x·Φ(x).
double gelu_grad(double x);

double sigmoid(double x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

}  // namespace mait
