// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mait/numerics/autograd.hpp"
#include "mait/numerics/tensor.hpp"

namespace mait {

/// Rectangular patch layout. Patch n sits at (n / cols, n % cols).
struct PatchGrid {
  std::size_t rows = 1;
  std::size_t cols = 1;

  std::size_t patches() const { return rows * cols; }
  /// Sequence length including the class token.
  std::size_t tokens() const { return patches() + 1; }
  std::size_t row_of(std::size_t n) const { return n / cols; }
  std::size_t col_of(std::size_t n) const { return n % cols; }
  std::size_t index(std::size_t r, std::size_t c) const { return r * cols + c; }

  void validate() const;
  friend bool operator==(const PatchGrid&, const PatchGrid&) = default;
};

enum class MaskKind { none, hard, soft, random };

std::string to_string(MaskKind kind);
MaskKind mask_kind_from_string(const std::string& s);

/// Indices of all patches within the R×R window centred on patch n,
/// clipped at the grid border (no wrap), ascending, self included.
std::vector<std::uint32_t> neighbor_indices(const PatchGrid& grid, std::size_t n, std::size_t r);

/// Attention mask over the (N+1)-token sequence, token 0 being the class
/// token. The class row and class column are always unmasked; patch rows
/// keep the columns listed in their neighbor list.
class AttentionMask {
 public:
  /// Mask that keeps everything.
  static AttentionMask unmasked(const PatchGrid& grid);

  MaskKind kind() const { return kind_; }
  std::size_t window() const { return window_; }
  const PatchGrid& grid() const { return grid_; }
  std::size_t tokens() const { return grid_.tokens(); }

  /// Kept patch indices for patch n (patch index space, not token space).
  const std::vector<std::uint32_t>& neighbors(std::size_t n) const;

  /// True when token j is visible from token i.
  bool keeps(std::size_t i, std::size_t j) const;

  /// Dense (N+1)×(N+1) 0/1 view. All ones for kind none.
  Tensor binary_matrix() const;

  /// Unconstrained soft-mask parameter; alpha = sigmoid(theta).
  double theta() const { return theta_; }
  void set_theta(double theta) { theta_ = theta; }
  double alpha() const;

 private:
  friend AttentionMask build_mask(const PatchGrid&, MaskKind, std::size_t);
  friend AttentionMask build_random_mask(const PatchGrid&, std::size_t, std::uint64_t);

  MaskKind kind_ = MaskKind::none;
  std::size_t window_ = 0;
  PatchGrid grid_;
  std::vector<std::vector<std::uint32_t>> neighbors_;
  double theta_ = 0.0;
};

/// Window mask of side R (odd). Kind none yields the unmasked mask; kind
/// random must go through build_random_mask.
AttentionMask build_mask(const PatchGrid& grid, MaskKind kind, std::size_t r);

/// Random-support control mask: every patch row keeps itself plus
/// keep_per_row - 1 distinct uniformly drawn other patches.
AttentionMask build_random_mask(const PatchGrid& grid, std::size_t keep_per_row,
                                std::uint64_t seed);

/// Soft multiplier matrix: 1 where the binary mask keeps, alpha elsewhere.
Tensor soft_mask_matrix(const AttentionMask& mask);
/// Differentiable in theta (a single-element variable).
Var soft_mask_matrix(const AttentionMask& mask, const Var& theta);

}  // namespace mait
