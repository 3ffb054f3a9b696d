// SPDX-License-Identifier: Apache-2.0
#include "mait/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

#include "mait/numerics/errors.hpp"

namespace mait {

namespace {

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         shape_string(t.shape()));
  }
}

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) +
                       " and " + shape_string(b.shape()));
}


using V4 = double __attribute__((vector_size(32)));
using V8 = double __attribute__((vector_size(64)));

template <typename V>
inline V loadv(const double* p) {
  V v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

template <typename V>
inline void storev(double* p, V v) { std::memcpy(p, &v, sizeof v); }

// Strided view of the left operand: element (i, t) is at p[i·rs + t·cs].
struct Lhs {
  const double* p;
  std::size_t rs, cs;
  double operator()(std::size_t i, std::size_t t) const { return p[i * rs + t * cs]; }
};

// Rows i..i+Mr-1, columns j..j+Nv·width(V)-1 of C = A·B.
template <typename V, std::size_t Mr, std::size_t Nv>
void gemm_tile(Lhs a, const double* b, double* c, std::size_t i, std::size_t j, std::size_t k,
               std::size_t n) {
  constexpr std::size_t w = sizeof(V) / sizeof(double);
  V acc[Mr][Nv] = {};
  for (std::size_t t = 0; t < k; ++t) {
    V bv[Nv];
    for (std::size_t q = 0; q < Nv; ++q) bv[q] = loadv<V>(b + t * n + j + q * w);
    for (std::size_t r = 0; r < Mr; ++r) {
      const V av = V{} + a(i + r, t);
      for (std::size_t q = 0; q < Nv; ++q) acc[r][q] += av * bv[q];
    }
  }
  for (std::size_t r = 0; r < Mr; ++r)
    for (std::size_t q = 0; q < Nv; ++q) storev(c + (i + r) * n + j + q * w, acc[r][q]);
}

// Columns j..j+width-1 of C over all rows, in row blocks of Mr.
template <typename V, std::size_t Mr, std::size_t Nv>
void gemm_panel(Lhs a, const double* b, double* c, std::size_t m, std::size_t j, std::size_t k,
                std::size_t n) {
  std::size_t i = 0;
  for (; i + Mr <= m; i += Mr) gemm_tile<V, Mr, Nv>(a, b, c, i, j, k, n);
  for (; i < m; ++i) gemm_tile<V, 1, Nv>(a, b, c, i, j, k, n);
}

// C = A·B for an m×k view A and row-major B (k×n). Every element is summed
// over t = 0..k-1 in order starting from zero, whichever path computes it.
void gemm(Lhs a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  std::size_t j = 0;
  for (; j + 16 <= n; j += 16) gemm_panel<V8, 6, 2>(a, b, c, m, j, k, n);
  for (; j + 8 <= n; j += 8) gemm_panel<V8, 8, 1>(a, b, c, m, j, k, n);
  for (; j + 4 <= n; j += 4) gemm_panel<V4, 8, 1>(a, b, c, m, j, k, n);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t jj = j; jj < n; ++jj) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a(r, t) * b[t * n + jj];
      c[r * n + jj] = s;
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) mismatch("matmul", a, b);
  Tensor c({m, n});
  gemm({a.data().data(), k, 1}, b.data().data(), c.data().data(), m, k, n);
  return c;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor t({n, m});
  const double* pa = a.data().data();
  double* pt = t.data().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) pt[j * m + i] = pa[i * n + j];
  return t;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  if (a.cols() != b.cols()) mismatch("matmul_nt", a, b);
  return matmul(a, transpose(b));
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  if (b.rows() != a.rows()) mismatch("matmul_tn", a, b);
  const std::size_t m = a.cols(), k = a.rows(), n = b.cols();
  Tensor c({m, n});
  gemm({a.data().data(), 1, m}, b.data().data(), c.data().data(), m, k, n);
  return c;
}

Tensor softmax_rows(const Tensor& x) {
  require_matrix(x, "softmax_rows");
  Tensor y(x.shape());
  const std::size_t n = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto out = y.row(r);
    double m = in[0];
    for (std::size_t j = 1; j < n; ++j) m = std::max(m, in[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[j] = std::exp(in[j] - m);
      s += out[j];
    }
    const double inv = 1.0 / s;
    for (std::size_t j = 0; j < n; ++j) out[j] *= inv;
  }
  return y;
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t n = x.shape().back();
  if (gain.numel() != n || bias.numel() != n) {
    throw DimensionError("layernorm: gain " + shape_string(gain.shape()) + " / bias " +
                         shape_string(bias.shape()) + " must have length " +
                         std::to_string(n));
  }
  Tensor y(x.shape());
  const std::size_t rows = x.numel() / n;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * n;
    double* out = y.data().data() + r * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += in[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) out[j] = (in[j] - mean) * inv * gain[j] + bias[j];
  }
  return y;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return cdf + x * pdf;
}

Tensor gelu(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = gelu(x[i]);
  return y;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) mismatch("add", a, b);
  Tensor c = a;
  for (std::size_t i = 0; i < c.numel(); ++i) c[i] += b[i];
  return c;
}

Tensor scale(const Tensor& a, double s) {
  Tensor c = a;
  for (double& v : c.storage()) v *= s;
  return c;
}

}  // namespace mait
