// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mait/maskgen/mask.hpp"

namespace mait {

/// Mask descriptor for one head. `window` is unused for kind none; `keep`
/// and `seed` only matter for kind random.
struct HeadMaskSpec {
  MaskKind kind = MaskKind::none;
  std::size_t window = 3;
  std::size_t keep = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const HeadMaskSpec&, const HeadMaskSpec&) = default;
};

/// Layer-major table of per-head mask descriptors.
struct MaskScheme {
  std::vector<std::vector<HeadMaskSpec>> layers;

  static MaskScheme unmasked(std::size_t num_layers, std::size_t num_heads);

  std::size_t num_layers() const { return layers.size(); }
  std::size_t num_heads() const { return layers.empty() ? 0 : layers.front().size(); }
  std::size_t masked_heads(std::size_t layer) const;
  std::size_t masked_heads() const;
  bool has_kind(MaskKind kind) const;

  /// Throws ConfigError unless the table is num_layers × num_heads with
  /// valid descriptors.
  void validate(std::size_t num_layers, std::size_t num_heads) const;

  friend bool operator==(const MaskScheme&, const MaskScheme&) = default;
};

enum class SchemePreset { sch1, sch2, sch3 };

SchemePreset scheme_preset_from_string(const std::string& s);

/// Sch.1: head 0 hard-masked in every layer.
/// Sch.2 (24 layers only): H-1 hard heads in layers 0-7, one in 9-19, none
///   in 20-23; layer 8 is left unmasked.
/// Sch.3 (24 layers only): soft masks on every head of layers 0-20.
MaskScheme make_scheme(SchemePreset preset, std::size_t num_layers, std::size_t num_heads,
                       std::size_t window);

/// Verbatim user layout, checked against the model shape.
MaskScheme make_scheme(std::vector<std::vector<HeadMaskSpec>> layout, std::size_t num_layers,
                       std::size_t num_heads);

/// Concrete masks for every layer/head of a scheme.
std::vector<std::vector<AttentionMask>> instantiate(const MaskScheme& scheme, const PatchGrid& grid);

AttentionMask instantiate(const HeadMaskSpec& spec, const PatchGrid& grid);

nlohmann::json to_json(const MaskScheme& scheme);
MaskScheme scheme_from_json(const nlohmann::json& doc);
void save_scheme(const MaskScheme& scheme, const std::filesystem::path& path);
MaskScheme load_scheme(const std::filesystem::path& path);

}  // namespace mait
