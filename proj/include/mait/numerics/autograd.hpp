// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "mait/numerics/tensor.hpp"

namespace mait {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the reverse-mode graph. The backward closure reads
/// `grad` and adds into each parent's gradient buffer.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;

  /// Gradient buffer, zero-initialized on first use.
  Tensor& grad_buffer();
};

/// Handle to a graph node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  /// Trainable input; gradients accumulate into it.
  static Var leaf(Tensor value, bool requires_grad = true);
  /// Input that never receives gradient.
  static Var constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  /// Accumulated gradient; zeros of value's shape if none flowed here.
  Tensor grad() const;

  const NodePtr& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  NodePtr node_;
};

/// Builds a result node; the closure is dropped when no parent needs gradient.
Var make_var(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward);

/// Reverse pass from a single-element root. Throws ContractError otherwise.
void backward(const Var& root);

// Differentiable operations.
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
/// x[m×n] + b[n] broadcast over rows.
Var add_bias(const Var& x, const Var& b);
/// x[m×n] ∘ g[n] broadcast over rows (per-channel diagonal scaling).
Var mul_cols(const Var& x, const Var& g);
Var scale(const Var& x, double s);
Var layernorm(const Var& x, const Var& gain, const Var& bias);
Var gelu(const Var& x);
Var sigmoid(const Var& x);
Var softmax_rows(const Var& x);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(const Var& top, const Var& bottom);
Var select_row(const Var& x, std::size_t r);
Var sum(const Var& x);
/// Mean negative log-likelihood of `labels` under row-wise softmax of logits.
Var cross_entropy(const Var& logits, std::span<const std::size_t> labels);

}  // namespace mait
