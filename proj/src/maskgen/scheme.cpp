// SPDX-License-Identifier: Apache-2.0
#include "mait/maskgen/scheme.hpp"

#include <fstream>

#include "mait/numerics/errors.hpp"

namespace mait {

namespace {

constexpr const char* kSchemeFormat = "mait.mask_scheme";
constexpr int kSchemeVersion = 1;

}  // namespace

MaskScheme MaskScheme::unmasked(std::size_t num_layers, std::size_t num_heads) {
  MaskScheme s;
  s.layers.assign(num_layers, std::vector<HeadMaskSpec>(num_heads));
  return s;
}

std::size_t MaskScheme::masked_heads(std::size_t layer) const {
  std::size_t k = 0;
  for (const auto& h : layers.at(layer))
    if (h.kind != MaskKind::none) ++k;
  return k;
}

std::size_t MaskScheme::masked_heads() const {
  std::size_t k = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) k += masked_heads(l);
  return k;
}

bool MaskScheme::has_kind(MaskKind kind) const {
  for (const auto& row : layers)
    for (const auto& h : row)
      if (h.kind == kind) return true;
  return false;
}

void MaskScheme::validate(std::size_t num_layers, std::size_t num_heads) const {
  if (layers.size() != num_layers) {
    throw ConfigError("mask scheme has " + std::to_string(layers.size()) +
                      " layers, model has " + std::to_string(num_layers));
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].size() != num_heads) {
      throw ConfigError("mask scheme layer " + std::to_string(l) + " has " +
                        std::to_string(layers[l].size()) + " heads, model has " +
                        std::to_string(num_heads));
    }
    for (const auto& h : layers[l]) {
      if ((h.kind == MaskKind::hard || h.kind == MaskKind::soft) && h.window % 2 == 0) {
        throw ConfigError("mask side must be odd in layer " + std::to_string(l));
      }
      if (h.kind == MaskKind::random && h.keep == 0) {
        throw ConfigError("random mask in layer " + std::to_string(l) + " needs keep >= 1");
      }
    }
  }
}

SchemePreset scheme_preset_from_string(const std::string& s) {
  if (s == "sch1") return SchemePreset::sch1;
  if (s == "sch2") return SchemePreset::sch2;
  if (s == "sch3") return SchemePreset::sch3;
  throw ConfigError("unknown scheme preset '" + s + "' (expected sch1, sch2, sch3 or custom)");
}

MaskScheme make_scheme(SchemePreset preset, std::size_t num_layers, std::size_t num_heads,
                       std::size_t window) {
  if (num_layers < 1 || num_heads < 1) throw ParameterError("scheme needs L >= 1 and H >= 1");
  if (window % 2 == 0) throw ParameterError("mask side must be odd");
  if (preset != SchemePreset::sch1 && num_layers != 24) {
    throw ParameterError("sch2/sch3 are defined for 24 layers; use a custom scheme for L=" +
                         std::to_string(num_layers));
  }
  MaskScheme s = MaskScheme::unmasked(num_layers, num_heads);
  const HeadMaskSpec hard{MaskKind::hard, window};
  const HeadMaskSpec soft{MaskKind::soft, window};
  switch (preset) {
    case SchemePreset::sch1:
      for (auto& row : s.layers) row[0] = hard;
      break;
    case SchemePreset::sch2:
      for (std::size_t l = 0; l <= 7; ++l)
        for (std::size_t h = 0; h + 1 < num_heads; ++h) s.layers[l][h] = hard;
      for (std::size_t l = 9; l <= 19; ++l) s.layers[l][0] = hard;
      break;
    case SchemePreset::sch3:
      for (std::size_t l = 0; l <= 20; ++l)
        for (auto& h : s.layers[l]) h = soft;
      break;
  }
  return s;
}

MaskScheme make_scheme(std::vector<std::vector<HeadMaskSpec>> layout, std::size_t num_layers,
                       std::size_t num_heads) {
  MaskScheme s{std::move(layout)};
  s.validate(num_layers, num_heads);
  return s;
}

AttentionMask instantiate(const HeadMaskSpec& spec, const PatchGrid& grid) {
  switch (spec.kind) {
    case MaskKind::none: return AttentionMask::unmasked(grid);
    case MaskKind::random: return build_random_mask(grid, spec.keep, spec.seed);
    default: return build_mask(grid, spec.kind, spec.window);
  }
}

std::vector<std::vector<AttentionMask>> instantiate(const MaskScheme& scheme, const PatchGrid& grid) {
  std::vector<std::vector<AttentionMask>> out;
  out.reserve(scheme.layers.size());
  for (const auto& row : scheme.layers) {
    auto& masks = out.emplace_back();
    masks.reserve(row.size());
    for (const auto& h : row) masks.push_back(instantiate(h, grid));
  }
  return out;
}

nlohmann::json to_json(const MaskScheme& scheme) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& row : scheme.layers) {
    nlohmann::json heads = nlohmann::json::array();
    for (const auto& h : row) {
      nlohmann::json e{{"kind", to_string(h.kind)}};
      if (h.kind == MaskKind::hard || h.kind == MaskKind::soft) e["r"] = h.window;
      if (h.kind == MaskKind::random) {
        e["keep"] = h.keep;
        e["seed"] = h.seed;
      }
      heads.push_back(std::move(e));
    }
    layers.push_back(std::move(heads));
  }
  return {{"format", kSchemeFormat}, {"version", kSchemeVersion}, {"layers", std::move(layers)}};
}

MaskScheme scheme_from_json(const nlohmann::json& doc) {
  try {
    if (doc.value("format", std::string{}) != kSchemeFormat) {
      throw ConfigError("not a mask scheme document");
    }
    if (doc.at("version").get<int>() != kSchemeVersion) {
      throw ConfigError("unsupported mask scheme version");
    }
    MaskScheme s;
    for (const auto& row : doc.at("layers")) {
      auto& heads = s.layers.emplace_back();
      for (const auto& e : row) {
        HeadMaskSpec h;
        h.kind = mask_kind_from_string(e.at("kind").get<std::string>());
        h.window = e.value("r", std::size_t{3});
        h.keep = e.value("keep", std::size_t{0});
        h.seed = e.value("seed", std::uint64_t{0});
        heads.push_back(h);
      }
    }
    if (!s.layers.empty()) s.validate(s.layers.size(), s.num_heads());
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed mask scheme: ") + e.what());
  }
}

void save_scheme(const MaskScheme& scheme, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(scheme).dump(2) << '\n';
}

MaskScheme load_scheme(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed mask scheme file " + path.string() + ": " + e.what());
  }
  return scheme_from_json(doc);
}

}  // namespace mait
