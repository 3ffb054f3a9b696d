// SPDX-License-Identifier: Apache-2.0
#include "mait/metrics/cost_model.hpp"

#include <numeric>

#include "mait/numerics/errors.hpp"

namespace mait {

std::uint64_t attn_map_flops(const CostQuery& q, AttnMethod method) {
  switch (method) {
    case AttnMethod::mha: return 2 * q.n * q.n * q.d;
    case AttnMethod::w_mha: return 2 * q.window * q.window * q.n * q.d;
    case AttnMethod::m_mha: return 2 * q.r * q.r * q.n * q.d;
  }
  return 0;
}

Ratio Ratio::of(std::uint64_t num, std::uint64_t den) {
  if (den == 0) throw ParameterError("ratio with zero denominator");
  const std::uint64_t g = std::gcd(num, den);
  if (g == 0) return {0, 1};
  return {num / g, den / g};
}

ReductionReport reduction_report(std::span<const CostQuery> stages, std::uint64_t ffn_ratio) {
  if (stages.empty()) throw ParameterError("reduction_report: no stages");
  ReductionReport rep;
  rep.ffn_ratio = ffn_ratio;
  for (const auto& q : stages) {
    if (q.n == 0 || q.d == 0 || q.r == 0) throw ParameterError("reduction_report: fields must be positive");
    if (q.r * q.r > q.n) throw ParameterError("reduction_report: mask window exceeds token count");
    StageCost s;
    s.query = q;
    s.attn_map_reduction = Ratio::of(q.n - q.r * q.r, q.n);
    s.attn_map_dense = attn_map_flops(q, AttnMethod::mha);
    s.attn_map_masked = attn_map_flops(q, AttnMethod::m_mha);
    s.linear = (4 + 2 * ffn_ratio) * q.n * q.d * q.d;
    s.block_dense = s.attn_map_dense + s.linear;
    s.block_masked = s.attn_map_masked + s.linear;
    s.attn_share_dense = Ratio::of(s.attn_map_dense, s.block_dense);
    s.block_reduction = Ratio::of(s.block_dense - s.block_masked, s.block_dense);
    rep.stages.push_back(s);
  }
  return rep;
}

nlohmann::json to_json(const ReductionReport& report) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : report.stages) {
    stages.push_back({
        {"n", s.query.n},
        {"d", s.query.d},
        {"r", s.query.r},
        {"attn_map_reduction", {s.attn_map_reduction.num, s.attn_map_reduction.den}},
        {"attn_map_reduction_percent", s.attn_map_reduction.percent()},
        {"attn_map_flops_dense", s.attn_map_dense},
        {"attn_map_flops_masked", s.attn_map_masked},
        {"linear_flops", s.linear},
        {"block_flops_dense", s.block_dense},
        {"block_flops_masked", s.block_masked},
        {"attn_share_dense_percent", s.attn_share_dense.percent()},
        {"block_reduction_percent", s.block_reduction.percent()},
    });
  }
  return {{"convention", report.convention}, {"ffn_ratio", report.ffn_ratio},
          {"stages", std::move(stages)}};
}

}  // namespace mait
