// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "mait/attention/attention.hpp"
#include "mait/numerics/errors.hpp"
#include "mait/numerics/ops.hpp"

namespace mait {

Var masked_attention(const Var& q, const Var& k, const Var& v, const Tensor* binary,
                     const Var& theta, Tensor* map) {
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  if (qv.rank() != 2 || kv.rank() != 2 || vv.rank() != 2 || qv.rows() != kv.rows() ||
      qv.rows() != vv.rows() || qv.cols() != kv.cols() || qv.cols() == 0) {
    throw DimensionError("masked_attention: Q " + shape_string(qv.shape()) + ", K " +
                         shape_string(kv.shape()) + ", V " + shape_string(vv.shape()));
  }
  const std::size_t t = qv.rows();
  if (binary && (binary->rows() != t || binary->cols() != t)) {
    throw DimensionError("masked_attention: mask " + shape_string(binary->shape()) + " for " +
                         std::to_string(t) + " tokens");
  }
  const bool soft = static_cast<bool>(theta);
  if (soft && !binary) throw ContractError("masked_attention: soft mask needs a keep matrix");
  const double c = 1.0 / std::sqrt(static_cast<double>(qv.cols()));
  const double alpha = soft ? sigmoid(theta.value()[0]) : 0.0;

  Tensor weights;
  if (binary) {
    weights = *binary;
    if (soft)
      for (double& w : weights.storage()) w = w > 0.5 ? 1.0 : alpha;
  }

  Tensor s = matmul(qv, transpose(kv));
  Tensor z = s;
  if (binary) {
    for (std::size_t i = 0; i < z.numel(); ++i) z[i] = (weights[i] * z[i]) * c;
  } else {
    for (double& x : z.storage()) x = x * c;
  }
  Tensor a = softmax_rows(z);
  Tensor out = matmul(a, vv);
  if (map) *map = a;

  std::vector<Var> parents{q, k, v};
  if (soft) parents.push_back(theta);
  const bool has_mask = binary != nullptr;
  return make_var(
      std::move(out), std::move(parents),
      [a = std::move(a), s = std::move(s), weights = std::move(weights), c, alpha, soft,
       has_mask](Node& n) {
        const Tensor& qv = n.parents[0]->value;
        const Tensor& kv = n.parents[1]->value;
        const Tensor& vv = n.parents[2]->value;
        const std::size_t t = a.rows();
        if (n.parents[2]->requires_grad) {
          Tensor& gv = n.parents[2]->grad_buffer();
          const Tensor dv = matmul_tn(a, n.grad);
          for (std::size_t i = 0; i < gv.numel(); ++i) gv[i] += dv[i];
        }
        // dZ = A ∘ (dA − rowdot(dA, A)).
        Tensor dz = matmul_nt(n.grad, vv);
        for (std::size_t i = 0; i < t; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < t; ++j) dot += dz(i, j) * a(i, j);
          for (std::size_t j = 0; j < t; ++j) dz(i, j) = a(i, j) * (dz(i, j) - dot);
        }
        if (soft && n.parents[3]->requires_grad) {
          double galpha = 0.0;
          for (std::size_t i = 0; i < dz.numel(); ++i)
            if (weights[i] != 1.0) galpha += dz[i] * s[i] * c;
          n.parents[3]->grad_buffer()[0] += galpha * alpha * (1.0 - alpha);
        }
        Tensor ds = std::move(dz);
        if (has_mask) {
          for (std::size_t i = 0; i < ds.numel(); ++i) ds[i] *= weights[i] * c;
        } else {
          for (double& x : ds.storage()) x *= c;
        }
        if (n.parents[0]->requires_grad) {
          Tensor& gq = n.parents[0]->grad_buffer();
          const Tensor dq = matmul(ds, kv);
          for (std::size_t i = 0; i < gq.numel(); ++i) gq[i] += dq[i];
        }
        if (n.parents[1]->requires_grad) {
          Tensor& gk = n.parents[1]->grad_buffer();
          const Tensor dk = matmul_tn(ds, qv);
          for (std::size_t i = 0; i < gk.numel(); ++i) gk[i] += dk[i];
        }
      });
}

Var masked_attention(const Var& q, const Var& k, const Var& v, const AttentionMask& mask,
                     const Var& theta, Tensor* map) {
  if (mask.tokens() != q.value().rows()) {
    throw DimensionError("masked_attention: mask covers " + std::to_string(mask.tokens()) +
                         " tokens, inputs have " + std::to_string(q.value().rows()));
  }
  if (mask.kind() == MaskKind::none) return masked_attention(q, k, v, nullptr, {}, map);
  const Tensor binary = mask.binary_matrix();
  if (mask.kind() != MaskKind::soft) return masked_attention(q, k, v, &binary, {}, map);
  const Var th = theta ? theta : Var::constant(Tensor::scalar(mask.theta()));
  return masked_attention(q, k, v, &binary, th, map);
}

namespace {

void check_heads(const Tensor& x, std::span<const HeadParams> heads, std::size_t masks) {
  if (heads.empty()) throw ConfigError("multi-head attention needs at least one head");
  if (masks != heads.size()) {
    throw ConfigError("scheme row has " + std::to_string(masks) + " masks for " +
                      std::to_string(heads.size()) + " heads");
  }
  const std::size_t dim = x.cols(), d = heads[0].wq.cols();
  if (d * heads.size() != dim) {
    throw DimensionError("head width " + std::to_string(d) + " x " +
                         std::to_string(heads.size()) + " heads != hidden dim " +
                         std::to_string(dim));
  }
  for (const auto& h : heads) {
    for (const Tensor* w : {&h.wq, &h.wk, &h.wv}) {
      if (w->rows() != dim || w->cols() != d) {
        throw DimensionError("head projection " + shape_string(w->shape()) + ", expected " +
                             std::to_string(dim) + "x" + std::to_string(d));
      }
    }
  }
}

}  // namespace

Tensor mha_heads(const Tensor& x, std::span<const HeadParams> heads,
                 std::span<const AttentionMask> masks, std::vector<Tensor>* maps) {
  check_heads(x, heads, masks.size());
  const std::size_t t = x.rows(), d = heads[0].wq.cols();
  Tensor concat({t, d * heads.size()});
  if (maps) maps->clear();
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const Tensor q = matmul(x, heads[h].wq);
    const Tensor k = matmul(x, heads[h].wk);
    const Tensor v = matmul(x, heads[h].wv);
    const KernelOptions opts{.capture = maps != nullptr};
    AttentionOutput o;
    const AttentionMask& m = masks[h];
    switch (m.kind()) {
      case MaskKind::none: o = attention(q, k, v, opts); break;
      case MaskKind::hard: o = masked_attention_sparse(q, k, v, m, opts); break;
      case MaskKind::soft: {
        AttentionMask tuned = m;
        tuned.set_theta(heads[h].theta);
        o = masked_attention_dense(q, k, v, tuned, opts);
        break;
      }
      case MaskKind::random: o = masked_attention_dense(q, k, v, m, opts); break;
    }
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < d; ++j) concat(i, h * d + j) = o.values(i, j);
    if (maps) maps->push_back(std::move(*o.map));
  }
  return concat;
}

Tensor mha_forward(const Tensor& x, std::span<const HeadParams> heads, const Tensor& wo,
                   std::span<const AttentionMask> masks, std::vector<Tensor>* maps) {
  return matmul(mha_heads(x, heads, masks, maps), wo);
}

Var mha(const Var& x, std::span<const HeadVars> heads, const Var& wo,
        std::span<const Tensor* const> binaries, std::vector<Tensor>* maps) {
  if (heads.empty()) throw ConfigError("multi-head attention needs at least one head");
  if (binaries.size() != heads.size()) {
    throw ConfigError("scheme row has " + std::to_string(binaries.size()) + " masks for " +
                      std::to_string(heads.size()) + " heads");
  }
  std::vector<Var> outs;
  outs.reserve(heads.size());
  if (maps) maps->assign(heads.size(), Tensor{});
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const Var q = matmul(x, heads[h].wq);
    const Var k = matmul(x, heads[h].wk);
    const Var v = matmul(x, heads[h].wv);
    outs.push_back(masked_attention(q, k, v, binaries[h], heads[h].theta,
                                    maps ? &(*maps)[h] : nullptr));
  }
  return matmul(concat_cols(outs), wo);
}

}  // namespace mait
