// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "mait/maskgen/mask.hpp"
#include "mait/maskgen/scheme.hpp"
#include "mait/numerics/tensor.hpp"

namespace mait {

/// Captured attention maps, indexed [layer][head], each (N+1)×(N+1).
struct AttentionRecord {
  PatchGrid grid;
  MaskScheme scheme;
  std::vector<std::vector<Tensor>> maps;

  std::size_t num_layers() const { return maps.size(); }
  std::size_t num_heads() const { return maps.empty() ? 0 : maps.front().size(); }
  bool has(std::size_t layer, std::size_t head) const;
  const Tensor& map(std::size_t layer, std::size_t head) const;

  /// Throws DimensionError on a wrongly-shaped map, ContractError when a
  /// row sum strays from 1 by more than `tol`.
  void validate(double tol = 1e-6) const;
};

/// Elementwise mean of records with identical layout. Rows of the mean
/// stay stochastic, and ALS (linear in the map) of the mean is the mean ALS.
AttentionRecord mean_record(std::span<const AttentionRecord> records);

/// Binary container: "MREC", u32 version, u32 header length, JSON header,
/// then little-endian f64 maps layer-major, head-minor, row-major.
void save_record(const AttentionRecord& record, const std::filesystem::path& path);
AttentionRecord load_record(const std::filesystem::path& path);

}  // namespace mait
