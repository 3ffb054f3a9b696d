// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mait/maskgen/mask.hpp"
#include "mait/numerics/tensor.hpp"

namespace mait {

/// Images of shape height × width × channels with values in [0, 1].
struct Dataset {
  std::size_t height = 0, width = 0, channels = 1;
  std::vector<Tensor> images;
  std::vector<std::uint32_t> labels;

  std::size_t size() const { return images.size(); }
  /// First `n` samples (all if n exceeds the size).
  Dataset head(std::size_t n) const;
  /// Throws ConfigError if shapes are ragged or a label is >= classes.
  void validate(std::size_t classes) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Pixel value threshold that counts as "bright" in the synthetic tasks.
inline constexpr double kBrightThreshold = 0.75;

/// Binary locality task on a dim noise background. Label 1 lights one 2×2
/// block of patches; label 0 lights one to four patches, no two of them
/// 8-adjacent on the patch grid. Only a patch together with its neighbors
/// separates a block from four scattered patches. Labels are fair coin
/// flips.
Dataset gen_local_task(const PatchGrid& grid, std::size_t patch_px, std::size_t samples,
                       std::uint64_t seed, std::size_t channels = 1);

/// Binary counting task: a random number of patches is lit; the label says
/// whether more than half of all patches are lit.
Dataset gen_global_task(const PatchGrid& grid, std::size_t patch_px, std::size_t samples,
                        std::uint64_t seed, std::size_t channels = 1);

/// "MDAT", u32 version, u32 count, u32 height, u32 width, u32 channels,
/// f32 pixels sample-major, then u32 labels. All little-endian.
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace mait
