// SPDX-License-Identifier: Apache-2.0
#include "mait/numerics/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "mait/numerics/errors.hpp"
#include "mait/numerics/ops.hpp"

namespace mait {

Tensor& Node::grad_buffer() {
  if (grad.numel() != value.numel() || grad.shape() != value.shape()) {
    grad = Tensor(value.shape());
  }
  return grad;
}

Var Var::leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

Tensor Var::grad() const {
  if (node_->grad.shape() == node_->value.shape()) return node_->grad;
  return Tensor(node_->value.shape());
}

Var make_var(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p.requires_grad();
  if (n->requires_grad) {
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

void backward(const Var& root) {
  if (!root) throw ContractError("backward: empty variable");
  if (root.value().numel() != 1) {
    throw ContractError("backward: root must be a single element, got shape " +
                        shape_string(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.numel() == n->value.numel()) n->backward(*n);
  }
}

namespace {

Tensor* parent_grad(Node& n, std::size_t i) {
  Node& p = *n.parents[i];
  return p.requires_grad ? &p.grad_buffer() : nullptr;
}

void accumulate(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += src[i];
}

void require_same(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  return make_var(mait::matmul(a.value(), b.value()), {a, b}, [](Node& n) {
    const Tensor& av = n.parents[0]->value;
    const Tensor& bv = n.parents[1]->value;
    if (Tensor* ga = parent_grad(n, 0)) accumulate(*ga, matmul_nt(n.grad, bv));
    if (Tensor* gb = parent_grad(n, 1)) accumulate(*gb, matmul_tn(av, n.grad));
  });
}

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  return make_var(mait::add(a.value(), b.value()), {a, b}, [](Node& n) {
    if (Tensor* ga = parent_grad(n, 0)) accumulate(*ga, n.grad);
    if (Tensor* gb = parent_grad(n, 1)) accumulate(*gb, n.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  return make_var(std::move(out), {a, b}, [](Node& n) {
    const Tensor& av = n.parents[0]->value;
    const Tensor& bv = n.parents[1]->value;
    if (Tensor* ga = parent_grad(n, 0))
      for (std::size_t i = 0; i < ga->numel(); ++i) (*ga)[i] += n.grad[i] * bv[i];
    if (Tensor* gb = parent_grad(n, 1))
      for (std::size_t i = 0; i < gb->numel(); ++i) (*gb)[i] += n.grad[i] * av[i];
  });
}

Var add_bias(const Var& x, const Var& b) {
  const std::size_t cols = x.value().cols();
  if (b.value().numel() != cols) {
    throw DimensionError("add_bias: bias " + shape_string(b.shape()) + " vs input " +
                         shape_string(x.shape()));
  }
  Tensor out = x.value();
  const std::size_t rows = out.rows();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) += b.value()[c];
  return make_var(std::move(out), {x, b}, [rows, cols](Node& n) {
    if (Tensor* gx = parent_grad(n, 0)) accumulate(*gx, n.grad);
    if (Tensor* gb = parent_grad(n, 1))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) (*gb)[c] += n.grad[r * cols + c];
  });
}

Var mul_cols(const Var& x, const Var& g) {
  const std::size_t cols = x.value().cols();
  if (g.value().numel() != cols) {
    throw DimensionError("mul_cols: scale " + shape_string(g.shape()) + " vs input " +
                         shape_string(x.shape()));
  }
  Tensor out = x.value();
  const std::size_t rows = out.rows();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) *= g.value()[c];
  return make_var(std::move(out), {x, g}, [rows, cols](Node& n) {
    const Tensor& xv = n.parents[0]->value;
    const Tensor& gv = n.parents[1]->value;
    if (Tensor* gx = parent_grad(n, 0))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) (*gx)(r, c) += n.grad[r * cols + c] * gv[c];
    if (Tensor* gg = parent_grad(n, 1))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) (*gg)[c] += n.grad[r * cols + c] * xv(r, c);
  });
}

Var scale(const Var& x, double s) {
  return make_var(mait::scale(x.value(), s), {x}, [s](Node& n) {
    if (Tensor* gx = parent_grad(n, 0))
      for (std::size_t i = 0; i < gx->numel(); ++i) (*gx)[i] += n.grad[i] * s;
  });
}

Var layernorm(const Var& x, const Var& gain, const Var& bias) {
  Tensor y = mait::layernorm(x.value(), gain.value(), bias.value());
  return make_var(std::move(y), {x, gain, bias}, [](Node& n) {
    const Tensor& xv = n.parents[0]->value;
    const Tensor& gv = n.parents[1]->value;
    Tensor* gx = parent_grad(n, 0);
    Tensor* gg = parent_grad(n, 1);
    Tensor* gb = parent_grad(n, 2);
    const std::size_t width = xv.shape().back();
    const std::size_t rows = xv.numel() / width;
    std::vector<double> xhat(width), dxhat(width);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* in = xv.data().data() + r * width;
      const double* dy = n.grad.data().data() + r * width;
      double mean = 0.0;
      for (std::size_t j = 0; j < width; ++j) mean += in[j];
      mean /= static_cast<double>(width);
      double var = 0.0;
      for (std::size_t j = 0; j < width; ++j) var += (in[j] - mean) * (in[j] - mean);
      var /= static_cast<double>(width);
      const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
      double m1 = 0.0, m2 = 0.0;
      for (std::size_t j = 0; j < width; ++j) {
        xhat[j] = (in[j] - mean) * inv;
        dxhat[j] = dy[j] * gv[j];
        m1 += dxhat[j];
        m2 += dxhat[j] * xhat[j];
        if (gg) (*gg)[j] += dy[j] * xhat[j];
        if (gb) (*gb)[j] += dy[j];
      }
      if (gx) {
        m1 /= static_cast<double>(width);
        m2 /= static_cast<double>(width);
        double* out = gx->data().data() + r * width;
        for (std::size_t j = 0; j < width; ++j) out[j] += inv * (dxhat[j] - m1 - xhat[j] * m2);
      }
    }
  });
}

Var gelu(const Var& x) {
  return make_var(mait::gelu(x.value()), {x}, [](Node& n) {
    const Tensor& xv = n.parents[0]->value;
    if (Tensor* gx = parent_grad(n, 0))
      for (std::size_t i = 0; i < gx->numel(); ++i) (*gx)[i] += n.grad[i] * gelu_grad(xv[i]);
  });
}

Var sigmoid(const Var& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = mait::sigmoid(x.value()[i]);
  return make_var(y, {x}, [y](Node& n) {
    if (Tensor* gx = parent_grad(n, 0))
      for (std::size_t i = 0; i < gx->numel(); ++i) (*gx)[i] += n.grad[i] * y[i] * (1.0 - y[i]);
  });
}

Var softmax_rows(const Var& x) {
  Tensor y = mait::softmax_rows(x.value());
  return make_var(y, {x}, [y](Node& n) {
    Tensor* gx = parent_grad(n, 0);
    if (!gx) return;
    const std::size_t cols = y.cols();
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += n.grad(r, j) * y(r, j);
      for (std::size_t j = 0; j < cols; ++j) (*gx)(r, j) += y(r, j) * (n.grad(r, j) - dot);
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = parts[0].value().rows();
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.value().rows() != rows) {
      throw DimensionError("concat_cols: row count mismatch " + shape_string(p.shape()));
    }
    offsets.push_back(total);
    total += p.value().cols();
  }
  Tensor out({rows, total});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(v.row(r).begin(), v.row(r).end(), out.row(r).begin() + offsets[k]);
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return make_var(std::move(out), std::move(ps), [offsets, rows](Node& n) {
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      Tensor* g = parent_grad(n, k);
      if (!g) continue;
      const std::size_t w = g->cols();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < w; ++c) (*g)(r, c) += n.grad(r, offsets[k] + c);
    }
  });
}

Var concat_rows(const Var& top, const Var& bottom) {
  const Tensor& a = top.value();
  const Tensor& b = bottom.value();
  if (a.cols() != b.cols()) {
    throw DimensionError("concat_rows: " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  const std::size_t cols = a.cols();
  const std::size_t ra = a.rows();
  std::vector<double> data(a.storage());
  data.insert(data.end(), b.storage().begin(), b.storage().end());
  Tensor out({ra + b.rows(), cols}, std::move(data));
  return make_var(std::move(out), {top, bottom}, [ra, cols](Node& n) {
    if (Tensor* ga = parent_grad(n, 0))
      for (std::size_t i = 0; i < ga->numel(); ++i) (*ga)[i] += n.grad[i];
    if (Tensor* gb = parent_grad(n, 1))
      for (std::size_t i = 0; i < gb->numel(); ++i) (*gb)[i] += n.grad[ra * cols + i];
  });
}

Var select_row(const Var& x, std::size_t r) {
  const Tensor& v = x.value();
  if (r >= v.rows()) throw IndexError("select_row: row " + std::to_string(r) + " of " +
                                      shape_string(v.shape()));
  const std::size_t cols = v.cols();
  Tensor out({1, cols}, std::vector<double>(v.row(r).begin(), v.row(r).end()));
  return make_var(std::move(out), {x}, [r, cols](Node& n) {
    if (Tensor* g = parent_grad(n, 0))
      for (std::size_t c = 0; c < cols; ++c) (*g)(r, c) += n.grad[c];
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().storage()) s += v;
  return make_var(Tensor::scalar(s), {x}, [](Node& n) {
    if (Tensor* g = parent_grad(n, 0))
      for (double& v : g->storage()) v += n.grad[0];
  });
}

Var cross_entropy(const Var& logits, std::span<const std::size_t> labels) {
  const Tensor& z = logits.value();
  const std::size_t rows = z.rows(), cols = z.cols();
  if (labels.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits " + shape_string(z.shape()));
  }
  Tensor p = mait::softmax_rows(z.reshaped({rows, cols}));
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] >= cols) throw IndexError("cross_entropy: label out of range");
    double m = z[r * cols];
    for (std::size_t c = 1; c < cols; ++c) m = std::max(m, z[r * cols + c]);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(z[r * cols + c] - m);
    loss += m + std::log(s) - z[r * cols + labels[r]];
  }
  loss /= static_cast<double>(rows);
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  return make_var(Tensor::scalar(loss), {logits}, [p, lab, rows, cols](Node& n) {
    Tensor* g = parent_grad(n, 0);
    if (!g) return;
    const double w = n.grad[0] / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        (*g)[r * cols + c] += w * (p(r, c) - (c == lab[r] ? 1.0 : 0.0));
  });
}

}  // namespace mait
