// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>

#include "mait/attention/attention.hpp"
#include "mait/numerics/errors.hpp"
#include "mait/numerics/ops.hpp"
#include "mait/numerics/parallel.hpp"

namespace mait {

namespace {

void check_qkv(const Tensor& q, const Tensor& k, const Tensor& v, const char* op) {
  auto fail = [&] {
    throw DimensionError(std::string(op) + ": Q " + shape_string(q.shape()) + ", K " +
                         shape_string(k.shape()) + ", V " + shape_string(v.shape()));
  };
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) fail();
  if (q.rows() != k.rows() || q.rows() != v.rows() || q.cols() != k.cols()) fail();
  if (q.cols() == 0 || q.rows() == 0) fail();
}

void check_tokens(std::size_t mask_tokens, std::size_t t, const char* op) {
  if (mask_tokens != t) {
    throw DimensionError(std::string(op) + ": mask covers " + std::to_string(mask_tokens) +
                         " tokens, inputs have " + std::to_string(t));
  }
}

void count(const KernelOptions& opts, std::uint64_t dots, std::size_t d) {
  if (opts.counters) {
    opts.counters->score_dots += dots;
    opts.counters->score_multiplies += dots * d;
  }
}

// Row-streaming dense kernel. Scores accumulate in the same order as
// matmul(q, transpose(k)), so this path and the differentiable one agree.
AttentionOutput dense_rows(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor* w,
                           const KernelOptions& opts) {
  const std::size_t t = q.rows(), d = q.cols(), dv = v.cols();
  const double c = 1.0 / std::sqrt(static_cast<double>(d));
  const Tensor kt = transpose(k);
  AttentionOutput out{Tensor({t, dv}), std::nullopt};
  if (opts.capture) out.map = Tensor({t, t});

  parallel_blocks(t, opts.workers, [&](std::size_t begin, std::size_t end) {
    std::vector<double> s(t);
    for (std::size_t i = begin; i < end; ++i) {
      std::fill(s.begin(), s.end(), 0.0);
      for (std::size_t x = 0; x < d; ++x) {
        const double qv = q(i, x);
        const double* krow = kt.data().data() + x * t;
        for (std::size_t j = 0; j < t; ++j) s[j] += qv * krow[j];
      }
      if (w) {
        const double* wrow = w->data().data() + i * t;
        for (std::size_t j = 0; j < t; ++j) s[j] = (wrow[j] * s[j]) * c;
      } else {
        for (std::size_t j = 0; j < t; ++j) s[j] = s[j] * c;
      }
      double m = s[0];
      for (std::size_t j = 1; j < t; ++j) m = std::max(m, s[j]);
      double z = 0.0;
      for (std::size_t j = 0; j < t; ++j) {
        s[j] = std::exp(s[j] - m);
        z += s[j];
      }
      const double inv = 1.0 / z;
      for (std::size_t j = 0; j < t; ++j) s[j] *= inv;
      double* orow = out.values.data().data() + i * dv;
      for (std::size_t j = 0; j < t; ++j) {
        const double a = s[j];
        const double* vrow = v.data().data() + j * dv;
        for (std::size_t x = 0; x < dv; ++x) orow[x] += a * vrow[x];
      }
      if (out.map) std::copy(s.begin(), s.end(), out.map->row(i).begin());
    }
  });
  count(opts, static_cast<std::uint64_t>(t) * t, d);
  return out;
}

}  // namespace

AttentionOutput attention(const Tensor& q, const Tensor& k, const Tensor& v,
                          const KernelOptions& opts) {
  check_qkv(q, k, v, "attention");
  return dense_rows(q, k, v, nullptr, opts);
}

AttentionOutput masked_attention_dense(const Tensor& q, const Tensor& k, const Tensor& v,
                                       const Tensor& weights, const KernelOptions& opts) {
  check_qkv(q, k, v, "masked_attention_dense");
  if (weights.rank() != 2 || weights.rows() != q.rows() || weights.cols() != q.rows()) {
    throw DimensionError("masked_attention_dense: mask " + shape_string(weights.shape()) +
                         " for " + std::to_string(q.rows()) + " tokens");
  }
  return dense_rows(q, k, v, &weights, opts);
}

AttentionOutput masked_attention_dense(const Tensor& q, const Tensor& k, const Tensor& v,
                                       const AttentionMask& mask, const KernelOptions& opts) {
  check_qkv(q, k, v, "masked_attention_dense");
  check_tokens(mask.tokens(), q.rows(), "masked_attention_dense");
  switch (mask.kind()) {
    case MaskKind::none: return dense_rows(q, k, v, nullptr, opts);
    case MaskKind::soft: {
      const Tensor w = soft_mask_matrix(mask);
      return dense_rows(q, k, v, &w, opts);
    }
    default: {
      const Tensor w = mask.binary_matrix();
      return dense_rows(q, k, v, &w, opts);
    }
  }
}

AttentionOutput masked_attention_sparse(const Tensor& q, const Tensor& k, const Tensor& v,
                                        const AttentionMask& mask, const KernelOptions& opts) {
  check_qkv(q, k, v, "masked_attention_sparse");
  check_tokens(mask.tokens(), q.rows(), "masked_attention_sparse");
  if (mask.kind() != MaskKind::hard) {
    throw ContractError("sparse kernel supports hard masks only, got " + to_string(mask.kind()));
  }
  const std::size_t t = q.rows(), d = q.cols(), dv = v.cols();
  const double c = 1.0 / std::sqrt(static_cast<double>(d));
  AttentionOutput out{Tensor({t, dv}), std::nullopt};
  if (opts.capture) out.map = Tensor({t, t});

  std::vector<double> sum_v(dv, 0.0);
  for (std::size_t j = 0; j < t; ++j)
    for (std::size_t x = 0; x < dv; ++x) sum_v[x] += v(j, x);

  auto score = [&](std::size_t i, std::size_t j) {
    const double* qi = q.data().data() + i * d;
    const double* kj = k.data().data() + j * d;
    double s = 0.0;
    for (std::size_t x = 0; x < d; ++x) s += qi[x] * kj[x];
    return s * c;
  };

  std::uint64_t dots = t;  // class row
  for (std::size_t n = 0; n + 1 < t; ++n) dots += 1 + mask.neighbors(n).size();

  parallel_blocks(t, opts.workers, [&](std::size_t begin, std::size_t end) {
    std::vector<double> e;
    std::vector<std::uint32_t> cols;
    for (std::size_t i = begin; i < end; ++i) {
      double* orow = out.values.data().data() + i * dv;
      if (i == 0) {
        // Class row is never masked: ordinary softmax over every token.
        e.resize(t);
        for (std::size_t j = 0; j < t; ++j) e[j] = score(0, j);
        const double m = *std::max_element(e.begin(), e.end());
        double z = 0.0;
        for (auto& x : e) z += (x = std::exp(x - m));
        for (std::size_t j = 0; j < t; ++j) {
          const double a = e[j] / z;
          for (std::size_t x = 0; x < dv; ++x) orow[x] += a * v(j, x);
          if (out.map) (*out.map)(0, j) = a;
        }
        continue;
      }
      const auto& nb = mask.neighbors(i - 1);
      cols.clear();
      cols.push_back(0);
      for (auto j : nb) cols.push_back(j + 1);
      e.resize(cols.size());
      // Masked columns sit at score 0, so the stabilizer must cover it
      // whenever any column is masked.
      const bool any_masked = cols.size() < t;
      double m = any_masked ? 0.0 : -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < cols.size(); ++a) {
        e[a] = score(i, cols[a]);
        m = std::max(m, e[a]);
      }
      const double base = any_masked ? std::exp(-m) : 0.0;
      double z = base * static_cast<double>(t - cols.size());
      for (auto& x : e) z += (x = std::exp(x - m));
      const double inv = 1.0 / z;
      // Masked columns: base · (S_V − Σ_kept v).
      for (std::size_t x = 0; x < dv; ++x) orow[x] = sum_v[x];
      for (auto j : cols)
        for (std::size_t x = 0; x < dv; ++x) orow[x] -= v(j, x);
      for (std::size_t x = 0; x < dv; ++x) orow[x] *= base;
      for (std::size_t a = 0; a < cols.size(); ++a)
        for (std::size_t x = 0; x < dv; ++x) orow[x] += e[a] * v(cols[a], x);
      for (std::size_t x = 0; x < dv; ++x) orow[x] *= inv;
      if (out.map) {
        auto row = out.map->row(i);
        std::fill(row.begin(), row.end(), base * inv);
        for (std::size_t a = 0; a < cols.size(); ++a) row[cols[a]] = e[a] * inv;
      }
    }
  });
  count(opts, dots, d);
  return out;
}

}  // namespace mait
