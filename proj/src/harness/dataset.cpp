// SPDX-License-Identifier: Apache-2.0
#include "mait/harness/dataset.hpp"

#include <algorithm>
#include <cstdlib>

#include "mait/numerics/binary_io.hpp"
#include "mait/numerics/errors.hpp"
#include "mait/numerics/rng.hpp"

namespace mait {

namespace {

constexpr std::uint32_t kDatasetVersion = 1;
constexpr double kNoiseHigh = 0.5;

struct Pixel {
  std::size_t y, x;
};

Tensor noise_image(Rng& rng, std::size_t h, std::size_t w, std::size_t ch) {
  return rng.uniform_tensor({h, w, ch}, 0.0, kNoiseHigh);
}

// Pixels are stored as f32 on disk; generate f32-representable values so
// in-memory and reloaded datasets agree exactly.
void round_f32(Tensor& img) {
  for (double& v : img.storage()) v = static_cast<double>(static_cast<float>(v));
}

void light(Tensor& img, Pixel p, Rng& rng) {
  const std::size_t w = img.extent(1), ch = img.extent(2);
  for (std::size_t c = 0; c < ch; ++c) img[(p.y * w + p.x) * ch + c] = rng.uniform(0.9, 1.0);
}

void light_patch(Tensor& img, std::size_t row, std::size_t col, std::size_t patch_px, Rng& rng) {
  for (std::size_t y = 0; y < patch_px; ++y)
    for (std::size_t x = 0; x < patch_px; ++x) light(img, {row * patch_px + y, col * patch_px + x}, rng);
}

}  // namespace

Dataset Dataset::head(std::size_t n) const {
  Dataset d{height, width, channels, {}, {}};
  n = std::min(n, size());
  d.images.assign(images.begin(), images.begin() + static_cast<std::ptrdiff_t>(n));
  d.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n));
  return d;
}

void Dataset::validate(std::size_t classes) const {
  if (images.size() != labels.size()) throw ConfigError("dataset: image/label count mismatch");
  const Shape want{height, width, channels};
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != want) {
      throw ConfigError("dataset: sample " + std::to_string(i) + " has shape " +
                        shape_string(images[i].shape()) + ", expected " + shape_string(want));
    }
    if (labels[i] >= classes) {
      throw ConfigError("dataset: label " + std::to_string(labels[i]) + " of sample " +
                        std::to_string(i) + " is not below " + std::to_string(classes));
    }
  }
}

Dataset gen_local_task(const PatchGrid& grid, std::size_t patch_px, std::size_t samples,
                       std::uint64_t seed, std::size_t channels) {
  if (grid.rows < 4 || grid.cols < 4) {
    throw ParameterError("local task needs a grid of at least 4x4 patches");
  }
  if (patch_px < 1 || channels < 1) throw ParameterError("patch_px and channels must be positive");
  const std::size_t h = grid.rows * patch_px, w = grid.cols * patch_px;
  Dataset d{h, w, channels, {}, {}};
  d.images.reserve(samples);
  d.labels.reserve(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    Rng rng = Rng::derive(seed, s);
    const std::uint32_t label = static_cast<std::uint32_t>(rng.below(2));
    Tensor img = noise_image(rng, h, w, channels);
    if (label == 1) {
      const std::size_t r = rng.below(grid.rows - 1), c = rng.below(grid.cols - 1);
      for (std::size_t dr = 0; dr < 2; ++dr)
        for (std::size_t dc = 0; dc < 2; ++dc) light_patch(img, r + dr, c + dc, patch_px, rng);
    } else {
      const std::size_t distractors = 1 + rng.below(4);
      std::vector<Pixel> placed;
      while (placed.size() < distractors) {
        const Pixel p{rng.below(grid.rows), rng.below(grid.cols)};
        const bool isolated = std::all_of(placed.begin(), placed.end(), [&](const Pixel& q) {
          const auto dy = static_cast<long>(p.y) - static_cast<long>(q.y);
          const auto dx = static_cast<long>(p.x) - static_cast<long>(q.x);
          return std::max(std::labs(dy), std::labs(dx)) >= 2;
        });
        if (isolated) placed.push_back(p);
      }
      for (const auto& p : placed) light_patch(img, p.y, p.x, patch_px, rng);
    }
    round_f32(img);
    d.images.push_back(std::move(img));
    d.labels.push_back(label);
  }
  return d;
}

Dataset gen_global_task(const PatchGrid& grid, std::size_t patch_px, std::size_t samples,
                        std::uint64_t seed, std::size_t channels) {
  grid.validate();
  const std::size_t n = grid.patches();
  if (n < 4) throw ParameterError("global task needs at least 4 patches");
  const std::size_t h = grid.rows * patch_px, w = grid.cols * patch_px;
  Dataset d{h, w, channels, {}, {}};
  for (std::size_t s = 0; s < samples; ++s) {
    Rng rng = Rng::derive(seed, s, 0x67);
    const std::uint32_t label = static_cast<std::uint32_t>(rng.below(2));
    // Lit count drawn from [N/4, N/2) for label 0 and (N/2, 3N/4] for label 1.
    const std::size_t lo = label ? n / 2 + 1 : n / 4;
    const std::size_t hi = label ? (3 * n) / 4 : (n - 1) / 2;
    const std::size_t lit = lo + rng.below(hi - lo + 1);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    Tensor img = noise_image(rng, h, w, channels);
    for (std::size_t k = 0; k < lit; ++k) light_patch(img, grid.row_of(order[k]), grid.col_of(order[k]), patch_px, rng);
    round_f32(img);
    d.images.push_back(std::move(img));
    d.labels.push_back(label);
  }
  return d;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  data.validate(~std::uint32_t{0});
  binio::Writer w;
  w.bytes("MDAT");
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(data.size()));
  w.u32(static_cast<std::uint32_t>(data.height));
  w.u32(static_cast<std::uint32_t>(data.width));
  w.u32(static_cast<std::uint32_t>(data.channels));
  for (const auto& img : data.images)
    for (double v : img.storage()) w.f32(static_cast<float>(v));
  for (auto l : data.labels) w.u32(l);
  binio::write_file(path.string(), w.buffer());
}

Dataset load_dataset(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path.string());
  binio::Reader r(bytes);
  try {
    if (r.bytes(4) != "MDAT") throw std::runtime_error(path.string() + ": not a dataset file");
    if (r.u32() != kDatasetVersion) throw std::runtime_error(path.string() + ": unsupported dataset version");
    const std::size_t count = r.u32();
    Dataset d;
    d.height = r.u32();
    d.width = r.u32();
    d.channels = r.u32();
    const std::size_t per = d.height * d.width * d.channels;
    if (r.remaining() != count * (per * 4 + 4)) {
      throw std::runtime_error(path.string() + ": size does not match the header");
    }
    d.images.reserve(count);
    for (std::size_t s = 0; s < count; ++s) {
      Tensor img({d.height, d.width, d.channels});
      for (double& v : img.storage()) v = static_cast<double>(r.f32());
      d.images.push_back(std::move(img));
    }
    for (std::size_t s = 0; s < count; ++s) d.labels.push_back(r.u32());
    return d;
  } catch (const binio::Truncated& e) {
    throw std::runtime_error(path.string() + ": truncated dataset (" + e.what() + ")");
  }
}

}  // namespace mait
