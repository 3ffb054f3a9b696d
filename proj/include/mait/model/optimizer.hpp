// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "mait/model/model.hpp"

namespace mait {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

/// Linear warmup then cosine decay to `min_lr`, indexed by step.
struct CosineSchedule {
  double peak_lr = 5e-4;
  double min_lr = 1e-6;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 1;

  double at(std::size_t step) const;
};

/// AdamW with decoupled weight decay applied only to parameters whose
/// spec has decay set.
class AdamW {
 public:
  AdamW(const ParamLayout& layout, AdamWConfig cfg);

  /// One update. `grads` is in layout order. Parameters are rounded back to
  /// f32-representable values afterwards.
  void step(ModelParams& params, const std::vector<Tensor>& grads, double lr);

  std::size_t steps() const { return t_; }

 private:
  AdamWConfig cfg_;
  std::vector<bool> decay_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace mait
