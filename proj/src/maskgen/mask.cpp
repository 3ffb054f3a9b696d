// SPDX-License-Identifier: Apache-2.0
#include "mait/maskgen/mask.hpp"

#include <algorithm>

#include "mait/numerics/errors.hpp"
#include "mait/numerics/ops.hpp"
#include "mait/numerics/rng.hpp"

namespace mait {

void PatchGrid::validate() const {
  if (rows < 1 || cols < 1) {
    throw ParameterError("patch grid must be at least 1x1, got " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
}

std::string to_string(MaskKind kind) {
  switch (kind) {
    case MaskKind::none: return "none";
    case MaskKind::hard: return "hard";
    case MaskKind::soft: return "soft";
    case MaskKind::random: return "random";
  }
  return "none";
}

MaskKind mask_kind_from_string(const std::string& s) {
  if (s == "none") return MaskKind::none;
  if (s == "hard") return MaskKind::hard;
  if (s == "soft") return MaskKind::soft;
  if (s == "random") return MaskKind::random;
  throw ConfigError("unknown mask kind '" + s + "'");
}

std::vector<std::uint32_t> neighbor_indices(const PatchGrid& grid, std::size_t n, std::size_t r) {
  grid.validate();
  if (n >= grid.patches()) {
    throw IndexError("patch index " + std::to_string(n) + " outside grid of " +
                     std::to_string(grid.patches()) + " patches");
  }
  if (r % 2 == 0) throw ParameterError("mask side must be odd, got " + std::to_string(r));
  const std::size_t half = (r - 1) / 2;
  const std::size_t row = grid.row_of(n), col = grid.col_of(n);
  const std::size_t r0 = row >= half ? row - half : 0;
  const std::size_t c0 = col >= half ? col - half : 0;
  const std::size_t r1 = std::min(grid.rows - 1, row + half);
  const std::size_t c1 = std::min(grid.cols - 1, col + half);
  std::vector<std::uint32_t> out;
  out.reserve((r1 - r0 + 1) * (c1 - c0 + 1));
  for (std::size_t i = r0; i <= r1; ++i)
    for (std::size_t j = c0; j <= c1; ++j) out.push_back(static_cast<std::uint32_t>(grid.index(i, j)));
  return out;
}

AttentionMask AttentionMask::unmasked(const PatchGrid& grid) {
  grid.validate();
  AttentionMask m;
  m.grid_ = grid;
  return m;
}

const std::vector<std::uint32_t>& AttentionMask::neighbors(std::size_t n) const {
  if (kind_ == MaskKind::none) {
    throw ContractError("unmasked attention has no neighbor lists");
  }
  if (n >= neighbors_.size()) throw IndexError("patch index out of range");
  return neighbors_[n];
}

bool AttentionMask::keeps(std::size_t i, std::size_t j) const {
  if (i == 0 || j == 0 || kind_ == MaskKind::none) return true;
  const auto& row = neighbors_[i - 1];
  return std::binary_search(row.begin(), row.end(), static_cast<std::uint32_t>(j - 1));
}

Tensor AttentionMask::binary_matrix() const {
  const std::size_t t = tokens();
  if (kind_ == MaskKind::none) return Tensor({t, t}, 1.0);
  Tensor m({t, t});
  for (std::size_t j = 0; j < t; ++j) m(0, j) = 1.0;
  for (std::size_t i = 1; i < t; ++i) {
    m(i, 0) = 1.0;
    for (auto j : neighbors_[i - 1]) m(i, j + 1) = 1.0;
  }
  return m;
}

double AttentionMask::alpha() const { return sigmoid(theta_); }

AttentionMask build_mask(const PatchGrid& grid, MaskKind kind, std::size_t r) {
  grid.validate();
  if (r % 2 == 0) throw ParameterError("mask side must be odd, got " + std::to_string(r));
  if (kind == MaskKind::random) {
    throw ContractError("random masks are built with build_random_mask");
  }
  AttentionMask m;
  m.grid_ = grid;
  m.kind_ = kind;
  m.window_ = r;
  if (kind == MaskKind::none) return m;
  m.neighbors_.reserve(grid.patches());
  for (std::size_t n = 0; n < grid.patches(); ++n) m.neighbors_.push_back(neighbor_indices(grid, n, r));
  return m;
}

AttentionMask build_random_mask(const PatchGrid& grid, std::size_t keep_per_row,
                                std::uint64_t seed) {
  grid.validate();
  const std::size_t n = grid.patches();
  if (keep_per_row < 1 || keep_per_row > n) {
    throw ParameterError("keep_per_row must lie in [1, " + std::to_string(n) + "], got " +
                         std::to_string(keep_per_row));
  }
  AttentionMask m;
  m.grid_ = grid;
  m.kind_ = MaskKind::random;
  m.neighbors_.resize(n);
  std::vector<std::uint32_t> pool(n - 1);
  for (std::size_t row = 0; row < n; ++row) {
    Rng rng = Rng::derive(seed, row);
    std::size_t k = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != row) pool[k++] = static_cast<std::uint32_t>(j);
    // Partial Fisher-Yates: the first keep-1 slots are a uniform draw.
    for (std::size_t i = 0; i + 1 < keep_per_row; ++i) {
      const std::size_t pick = i + rng.below(pool.size() - i);
      std::swap(pool[i], pool[pick]);
    }
    auto& nb = m.neighbors_[row];
    nb.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep_per_row - 1));
    nb.push_back(static_cast<std::uint32_t>(row));
    std::sort(nb.begin(), nb.end());
  }
  return m;
}

Tensor soft_mask_matrix(const AttentionMask& mask) {
  if (mask.kind() != MaskKind::soft) {
    throw ContractError("soft_mask_matrix requires a soft mask, got " + to_string(mask.kind()));
  }
  const double a = mask.alpha();
  Tensor m = mask.binary_matrix();
  for (double& v : m.storage()) v = v > 0.5 ? 1.0 : a;
  return m;
}

Var soft_mask_matrix(const AttentionMask& mask, const Var& theta) {
  if (mask.kind() != MaskKind::soft) {
    throw ContractError("soft_mask_matrix requires a soft mask, got " + to_string(mask.kind()));
  }
  if (theta.value().numel() != 1) throw DimensionError("soft mask theta must be a scalar");
  const double a = sigmoid(theta.value()[0]);
  Tensor binary = mask.binary_matrix();
  Tensor m = binary;
  for (double& v : m.storage()) v = v > 0.5 ? 1.0 : a;
  return make_var(std::move(m), {theta}, [binary = std::move(binary), a](Node& n) {
    Node& p = *n.parents[0];
    if (!p.requires_grad) return;
    double s = 0.0;
    for (std::size_t i = 0; i < binary.numel(); ++i)
      if (binary[i] < 0.5) s += n.grad[i];
    p.grad_buffer()[0] += s * a * (1.0 - a);
  });
}

}  // namespace mait
