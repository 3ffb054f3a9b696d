// SPDX-License-Identifier: Apache-2.0
#include "mait/model/optimizer.hpp"

#include <cmath>
#include <numbers>

#include "mait/numerics/errors.hpp"

namespace mait {

double CosineSchedule::at(std::size_t step) const {
  if (warmup_steps > 0 && step < warmup_steps) {
    return peak_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  const std::size_t span = total_steps > warmup_steps ? total_steps - warmup_steps : 1;
  const double progress =
      std::min(1.0, static_cast<double>(step - warmup_steps) / static_cast<double>(span));
  return min_lr + 0.5 * (peak_lr - min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(const ParamLayout& layout, AdamWConfig cfg) : cfg_(cfg) {
  for (const auto& s : layout.specs) {
    decay_.push_back(s.decay);
    m_.emplace_back(s.shape);
    v_.emplace_back(s.shape);
  }
}

void AdamW::step(ModelParams& params, const std::vector<Tensor>& grads, double lr) {
  if (grads.size() != m_.size() || params.tensors.size() != m_.size()) {
    throw DimensionError("optimizer: parameter/gradient count mismatch");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < m_.size(); ++k) {
    Tensor& p = params.tensors[k];
    const Tensor& g = grads[k];
    if (g.shape() != p.shape()) throw DimensionError("optimizer: gradient shape mismatch");
    const double wd = decay_[k] ? cfg_.weight_decay : 0.0;
    for (std::size_t i = 0; i < p.numel(); ++i) {
      m_[k][i] = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * g[i];
      v_[k][i] = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m_[k][i] / bc1;
      const double vhat = v_[k][i] / bc2;
      p[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + wd * p[i]);
    }
  }
  params.round_to_f32();
}

}  // namespace mait
