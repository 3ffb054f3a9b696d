// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace mait {

/// Inputs of the attention-map cost formulas. `window` is the side of a
/// shifted-window attention window; `r` the mask side.
struct CostQuery {
  std::uint64_t n = 0;
  std::uint64_t d = 0;
  std::uint64_t r = 3;
  std::uint64_t window = 7;
};

enum class AttnMethod { mha, w_mha, m_mha };

/// 2N²D, 2M²ND or 2R²ND.
std::uint64_t attn_map_flops(const CostQuery& q, AttnMethod method);

/// Reduced fraction num/den.
struct Ratio {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  static Ratio of(std::uint64_t num, std::uint64_t den);
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  double percent() const { return 100.0 * value(); }
  friend bool operator==(const Ratio&, const Ratio&) = default;
};

/// Counting convention for whole-block figures.
inline constexpr const char* kBlockFlopsConvention =
    "mac-count: one FLOP per multiply-accumulate; attention maps (QK^T and A.V) = 2*N^2*D "
    "dense or 2*R^2*N*D masked; linear layers (QKV, output projection, FFN) = "
    "(4 + 2*ffn_ratio)*N*D^2; softmax, normalization, activation and bias terms omitted";

struct StageCost {
  CostQuery query;
  Ratio attn_map_reduction;    // 1 − R²/N, convention-free
  std::uint64_t attn_map_dense = 0;
  std::uint64_t attn_map_masked = 0;
  std::uint64_t linear = 0;    // per the block convention
  std::uint64_t block_dense = 0;
  std::uint64_t block_masked = 0;
  Ratio attn_share_dense;      // attention-map share of the dense block
  Ratio block_reduction;       // 1 − block_masked / block_dense
};

struct ReductionReport {
  std::string convention = kBlockFlopsConvention;
  std::uint64_t ffn_ratio = 4;
  std::vector<StageCost> stages;
};

/// Per-stage savings from masking every head of a block.
ReductionReport reduction_report(std::span<const CostQuery> stages, std::uint64_t ffn_ratio = 4);

nlohmann::json to_json(const ReductionReport& report);

}  // namespace mait
