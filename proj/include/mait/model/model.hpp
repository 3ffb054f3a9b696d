// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mait/metrics/record.hpp"
#include "mait/model/config.hpp"
#include "mait/numerics/autograd.hpp"
#include "mait/numerics/tensor.hpp"

namespace mait {

struct ParamSpec {
  std::string name;
  Shape shape;
  bool decay = false;  // subject to weight decay
};

struct HeadSlots {
  std::size_t wq = 0, wk = 0, wv = 0;
  std::optional<std::size_t> theta;
};

struct LayerSlots {
  std::size_t ln1_g = 0, ln1_b = 0;
  std::vector<HeadSlots> heads;
  std::size_t wo = 0, bo = 0;
  std::size_t ln2_g = 0, ln2_b = 0;
  std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;
  std::optional<std::size_t> ls1, ls2;
};

/// Position of every parameter tensor in the flat list. Derived from the
/// config alone; the order is also the checkpoint order.
struct ParamLayout {
  std::size_t patch_w = 0, patch_b = 0, cls = 0, pos = 0;
  std::vector<LayerSlots> layers;
  std::size_t norm_g = 0, norm_b = 0, head_w = 0, head_b = 0;
  std::vector<ParamSpec> specs;

  std::size_t scalar_count() const;
};

ParamLayout make_layout(const ModelConfig& cfg);

/// Flat parameter list in layout order. Values are kept representable in
/// 32-bit floats so that checkpoints reproduce them exactly.
struct ModelParams {
  std::vector<Tensor> tensors;

  void round_to_f32();
  bool all_finite() const;
  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Config, layout, parameters and the precomputed keep matrices of every
/// masked head.
class Model {
 public:
  Model(ModelConfig config, ModelParams params);

  /// Truncated-normal (sigma 0.02) weights, zero biases, unit norm gains,
  /// LayerScale at layerscale_eps, soft-mask theta 0.
  static Model init(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }

  /// Keep matrix of a head, nullptr when unmasked.
  const Tensor* keep_matrix(std::size_t layer, std::size_t head) const;

  /// Learned alpha per soft head as (layer, head, alpha).
  struct SoftAlpha {
    std::size_t layer, head;
    double alpha;
  };
  std::vector<SoftAlpha> soft_alphas() const;

 private:
  ModelConfig config_;
  ParamLayout layout_;
  ModelParams params_;
  std::shared_ptr<const std::vector<std::vector<std::optional<Tensor>>>> keep_;
};

/// Per-call switches of the differentiable forward.
struct ForwardOptions {
  bool train = false;
  /// Stochastic depth draws come from (drop_seed, sample_key, layer).
  std::uint64_t drop_seed = 0;
  std::uint64_t sample_key = 0;
  AttentionRecord* capture = nullptr;
};

/// One variable per parameter tensor.
std::vector<Var> param_vars(const ModelParams& params, bool requires_grad);

/// Row-major patch flattening: N × (patch_px² · channels), standardized
/// with the config's pixel_mean and pixel_std.
Tensor patchify(const Tensor& image, const ModelConfig& cfg);

// Differentiable pieces; `p` holds one variable per parameter tensor.
Var embed(const Model& model, std::span<const Var> p, const Tensor& image);
Var block(const Model& model, std::span<const Var> p, std::size_t layer, const Var& x,
          const ForwardOptions& opts, std::vector<Tensor>* maps = nullptr);
Var logits(const Model& model, std::span<const Var> p, const Tensor& image,
           const ForwardOptions& opts = {});

// Plain evaluation API.
Tensor patch_embed(const Tensor& image, const Model& model);
Tensor block_forward(const Tensor& x, const Model& model, std::size_t layer, bool train_mode = false,
                     std::uint64_t drop_seed = 0);
/// Logits (1 × classes) in eval mode; fills `capture` with L×H maps when set.
Tensor forward(const Tensor& image, const Model& model, AttentionRecord* capture = nullptr);
/// B × classes logits, eval mode.
Tensor forward_batch(std::span<const Tensor> images, const Model& model);

}  // namespace mait
