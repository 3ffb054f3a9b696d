// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mait/maskgen/mask.hpp"
#include "mait/numerics/autograd.hpp"
#include "mait/numerics/tensor.hpp"

namespace mait {

struct AttentionOutput {
  Tensor values;             // (N+1)×d
  std::optional<Tensor> map; // (N+1)×(N+1), row-stochastic; only when captured
};

/// Work performed on the score matrix. One dot product is q_i·k_j over the
/// head width, i.e. `head_dim` multiplies.
struct KernelCounters {
  std::uint64_t score_dots = 0;
  std::uint64_t score_multiplies = 0;
};

struct KernelOptions {
  bool capture = false;
  KernelCounters* counters = nullptr;
  /// Rows are split into contiguous blocks across this many threads.
  std::size_t workers = 1;
};

/// Softmax(Q Kᵀ / √d) V.
AttentionOutput attention(const Tensor& q, const Tensor& k, const Tensor& v,
                          const KernelOptions& opts = {});

/// Softmax((M ∘ Q Kᵀ) / √d) V with masked scores set to zero before the
/// softmax, so excluded tokens still contribute e⁰. Soft masks use the
/// alpha matrix; kind none is plain attention.
AttentionOutput masked_attention_dense(const Tensor& q, const Tensor& k, const Tensor& v,
                                       const AttentionMask& mask, const KernelOptions& opts = {});

/// Same with an explicit (N+1)×(N+1) multiplier matrix.
AttentionOutput masked_attention_dense(const Tensor& q, const Tensor& k, const Tensor& v,
                                       const Tensor& weights, const KernelOptions& opts = {});

/// Hard-mask kernel that only evaluates kept scores. With s_i the scaled
/// kept scores of a row and m = max(0, max_i s_i):
///
///   out = [Σ e^{s_i-m} v_i + e^{-m} (S_V - Σ v_i)] / [Σ e^{s_i-m} + e^{-m} (T - |kept|)]
///
/// where S_V is the sum of all value rows and T = N+1. Every masked column
/// has score exactly zero, so its weight is the shared e^{-m} and the
/// masked values collapse into one V-sum term. The 0 in the stabilizer
/// keeps e^{-m} ≤ 1.
AttentionOutput masked_attention_sparse(const Tensor& q, const Tensor& k, const Tensor& v,
                                        const AttentionMask& mask, const KernelOptions& opts = {});

/// Differentiable dense kernel. `binary` is the 0/1 keep matrix (nullptr
/// for unmasked). When `theta` is set the zeros become sigmoid(theta) and
/// theta receives gradient. The attention map is copied to `map` if given.
Var masked_attention(const Var& q, const Var& k, const Var& v, const Tensor* binary,
                     const Var& theta = {}, Tensor* map = nullptr);

/// Convenience overload that derives the keep matrix from `mask`. For soft
/// masks without an explicit theta, mask.theta() is used as a constant.
Var masked_attention(const Var& q, const Var& k, const Var& v, const AttentionMask& mask,
                     const Var& theta = {}, Tensor* map = nullptr);

// ---------------------------------------------------------------------------
// Multi-head assembly.

/// Projections of one head: each D×d, with d·H = D.
struct HeadParams {
  Tensor wq, wk, wv;
  double theta = 0.0;  // soft heads only
};

/// Concatenated per-head outputs (before the output projection). Each head
/// runs the kernel of its mask: unmasked → standard, hard → sparse,
/// soft/random → dense.
Tensor mha_heads(const Tensor& x, std::span<const HeadParams> heads,
                 std::span<const AttentionMask> masks, std::vector<Tensor>* maps = nullptr);

/// mha_heads(...) · W_o.
Tensor mha_forward(const Tensor& x, std::span<const HeadParams> heads, const Tensor& wo,
                   std::span<const AttentionMask> masks, std::vector<Tensor>* maps = nullptr);

struct HeadVars {
  Var wq, wk, wv;
  Var theta;  // empty unless the head is soft-masked
};

/// Differentiable multi-head attention through the dense kernel.
/// `binaries[h]` is the keep matrix of head h or nullptr when unmasked.
Var mha(const Var& x, std::span<const HeadVars> heads, const Var& wo,
        std::span<const Tensor* const> binaries, std::vector<Tensor>* maps = nullptr);

}  // namespace mait
