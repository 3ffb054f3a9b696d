// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>

#include <nlohmann/json.hpp>

#include "mait/maskgen/mask.hpp"
#include "mait/maskgen/scheme.hpp"

namespace mait {

struct ModelConfig {
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t dim = 64;
  PatchGrid grid{8, 8};
  std::size_t patch_px = 4;
  std::size_t channels = 1;
  std::size_t classes = 2;
  std::size_t ffn_ratio = 4;
  /// Pixels enter the patch projection as (value - pixel_mean) / pixel_std.
  /// The defaults match the background statistics of the synthetic tasks.
  double pixel_mean = 0.25;
  double pixel_std = 0.2;
  /// Initial LayerScale diagonal; disabled when empty.
  std::optional<double> layerscale_eps;
  double drop_path_rate = 0.0;
  MaskScheme scheme = MaskScheme::unmasked(4, 4);

  std::size_t head_dim() const { return dim / heads; }
  std::size_t patch_features() const { return patch_px * patch_px * channels; }
  std::size_t image_height() const { return grid.rows * patch_px; }
  std::size_t image_width() const { return grid.cols * patch_px; }
  /// Linear stochastic-depth rate of one block.
  double drop_path_at(std::size_t layer) const;

  /// Throws ConfigError on any inconsistency.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Fields mirror the struct; `grid` is [rows, cols], `scheme` a mask scheme
/// document.
nlohmann::json to_json(const ModelConfig& cfg);

/// Missing fields keep their defaults. `scheme` may be a full scheme
/// document, a preset name ("none", "sch1", "sch2", "sch3") combined with
/// `mask_r`, and defaults to "none".
ModelConfig model_config_from_json(const nlohmann::json& doc);

}  // namespace mait
