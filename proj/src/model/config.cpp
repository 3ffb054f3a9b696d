// SPDX-License-Identifier: Apache-2.0
#include "mait/model/config.hpp"

#include <cmath>

#include "mait/numerics/errors.hpp"

namespace mait {

double ModelConfig::drop_path_at(std::size_t layer) const {
  if (layers <= 1) return drop_path_rate;
  return drop_path_rate * static_cast<double>(layer) / static_cast<double>(layers - 1);
}

void ModelConfig::validate() const {
  if (layers < 1 || heads < 1 || dim < 1) throw ConfigError("layers, heads and dim must be positive");
  if (dim % heads != 0) {
    throw ConfigError("hidden dim " + std::to_string(dim) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (grid.rows < 1 || grid.cols < 1) throw ConfigError("patch grid must be at least 1x1");
  if (patch_px < 1 || channels < 1) throw ConfigError("patch_px and channels must be positive");
  if (classes < 2) throw ConfigError("need at least 2 classes");
  if (ffn_ratio < 1) throw ConfigError("ffn_ratio must be >= 1");
  if (!std::isfinite(pixel_mean) || !(pixel_std > 0.0) || !std::isfinite(pixel_std)) {
    throw ConfigError("pixel_mean must be finite and pixel_std positive");
  }
  if (!(drop_path_rate >= 0.0 && drop_path_rate < 1.0)) throw ConfigError("drop_path_rate must lie in [0, 1)");
  if (layerscale_eps && *layerscale_eps < 0.0) throw ConfigError("layerscale_eps must be >= 0");
  scheme.validate(layers, heads);
}

nlohmann::json to_json(const ModelConfig& cfg) {
  nlohmann::json j{{"layers", cfg.layers},
                   {"heads", cfg.heads},
                   {"dim", cfg.dim},
                   {"grid", {cfg.grid.rows, cfg.grid.cols}},
                   {"patch_px", cfg.patch_px},
                   {"channels", cfg.channels},
                   {"classes", cfg.classes},
                   {"ffn_ratio", cfg.ffn_ratio},
                   {"pixel_mean", cfg.pixel_mean},
                   {"pixel_std", cfg.pixel_std},
                   {"drop_path_rate", cfg.drop_path_rate},
                   {"scheme", to_json(cfg.scheme)}};
  j["layerscale_eps"] = cfg.layerscale_eps ? nlohmann::json(*cfg.layerscale_eps) : nlohmann::json();
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& doc) {
  try {
    ModelConfig c;
    c.layers = doc.value("layers", c.layers);
    c.heads = doc.value("heads", c.heads);
    c.dim = doc.value("dim", c.dim);
    if (doc.contains("grid")) {
      c.grid = {doc["grid"].at(0).get<std::size_t>(), doc["grid"].at(1).get<std::size_t>()};
    }
    c.patch_px = doc.value("patch_px", c.patch_px);
    c.channels = doc.value("channels", c.channels);
    c.classes = doc.value("classes", c.classes);
    c.ffn_ratio = doc.value("ffn_ratio", c.ffn_ratio);
    c.pixel_mean = doc.value("pixel_mean", c.pixel_mean);
    c.pixel_std = doc.value("pixel_std", c.pixel_std);
    c.drop_path_rate = doc.value("drop_path_rate", c.drop_path_rate);
    if (doc.contains("layerscale_eps") && !doc["layerscale_eps"].is_null()) {
      c.layerscale_eps = doc["layerscale_eps"].get<double>();
    }
    const std::size_t r = doc.value("mask_r", std::size_t{3});
    const nlohmann::json scheme = doc.value("scheme", nlohmann::json("none"));
    if (scheme.is_string()) {
      const auto name = scheme.get<std::string>();
      if (name == "none") {
        c.scheme = MaskScheme::unmasked(c.layers, c.heads);
      } else {
        try {
          c.scheme = make_scheme(scheme_preset_from_string(name), c.layers, c.heads, r);
        } catch (const ParameterError& e) {
          throw ConfigError(e.what());
        }
      }
    } else {
      c.scheme = scheme_from_json(scheme);
    }
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
}

}  // namespace mait
