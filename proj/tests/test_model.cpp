// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <gtest/gtest.h>

#include "mait/harness/dataset.hpp"
#include "mait/harness/train.hpp"
#include "mait/model/checkpoint.hpp"
#include "mait/model/model.hpp"
#include "mait/model/optimizer.hpp"
#include "mait/numerics/binary_io.hpp"
#include "mait/numerics/errors.hpp"
#include "mait/numerics/grad_check.hpp"
#include "mait/numerics/rng.hpp"
#include "oracles.hpp"

using namespace mait;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("mait_model_" + name);
}

ModelConfig small_config(std::size_t layers = 2, std::size_t heads = 2, std::size_t dim = 16,
                         PatchGrid grid = {3, 3}) {
  ModelConfig c;
  c.layers = layers;
  c.heads = heads;
  c.dim = dim;
  c.grid = grid;
  c.patch_px = 2;
  c.scheme = MaskScheme::unmasked(layers, heads);
  return c;
}

/// Parameters drawn with a larger spread than the default init so every
/// path of the network carries signal.
Model random_model(const ModelConfig& cfg, std::uint64_t seed) {
  Model m = Model::init(cfg, seed);
  Rng rng(seed + 1000);
  for (auto& t : m.params().tensors)
    for (double& v : t.storage()) v = 0.3 * rng.normal();
  m.params().round_to_f32();
  return m;
}

/// Hard, soft and unmasked heads interleaved across layers.
MaskScheme mixed_scheme(std::size_t layers, std::size_t heads) {
  MaskScheme s = MaskScheme::unmasked(layers, heads);
  for (std::size_t l = 0; l < layers; ++l)
    for (std::size_t h = 0; h < heads; ++h) {
      if ((l + h) % 3 == 0) s.layers[l][h] = HeadMaskSpec{MaskKind::hard, 3, 0, 0};
      if ((l + h) % 3 == 1) s.layers[l][h] = HeadMaskSpec{MaskKind::soft, 3, 0, 0};
    }
  return s;
}

Tensor random_image(const ModelConfig& cfg, Rng& rng) {
  return rng.uniform_tensor({cfg.image_height(), cfg.image_width(), cfg.channels}, 0.0, 1.0);
}

// Independently coded DeiT-style forward: scalar loops in long double via
// the test oracles, reading parameters by name.
struct Oracle {
  const Model& m;
  const Tensor& p(std::size_t slot) const { return m.params().tensors[slot]; }

  Tensor embed(const Tensor& img) const {
    const auto& c = m.config();
    const auto& l = m.layout();
    const std::size_t n = c.grid.patches(), f = c.patch_features(), w = img.extent(1);
    Tensor patches({n, f});
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t r0 = (k / c.grid.cols) * c.patch_px, c0 = (k % c.grid.cols) * c.patch_px;
      std::size_t i = 0;
      for (std::size_t y = 0; y < c.patch_px; ++y)
        for (std::size_t x = 0; x < c.patch_px; ++x)
          for (std::size_t ch = 0; ch < c.channels; ++ch)
            patches(k, i++) = (img[((r0 + y) * w + c0 + x) * c.channels + ch] - c.pixel_mean) / c.pixel_std;
    }
    const Tensor proj = oracle::matmul(patches, p(l.patch_w));
    Tensor x({n + 1, c.dim});
    for (std::size_t j = 0; j < c.dim; ++j) x(0, j) = p(l.cls)[j] + p(l.pos)(0, j);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < c.dim; ++j) x(k + 1, j) = proj(k, j) + p(l.patch_b)[j] + p(l.pos)(k + 1, j);
    return x;
  }

  Tensor block(const Tensor& x, std::size_t layer) const {
    const auto& c = m.config();
    const auto& s = m.layout().layers[layer];
    const std::size_t t = x.rows(), d = c.head_dim();
    const Tensor h = oracle::layernorm(x, p(s.ln1_g), p(s.ln1_b), 1e-6);
    Tensor cat({t, c.dim});
    for (std::size_t head = 0; head < c.heads; ++head) {
      const auto& hs = s.heads[head];
      const Tensor* keep = m.keep_matrix(layer, head);
      Tensor soft;
      if (hs.theta) {
        const double alpha = 1.0 / (1.0 + std::exp(-p(*hs.theta)[0]));
        soft = *keep;
        for (double& v : soft.storage()) v = v == 1.0 ? 1.0 : alpha;
        keep = &soft;
      }
      const Tensor o = oracle::attention(oracle::matmul(h, p(hs.wq)), oracle::matmul(h, p(hs.wk)),
                                         oracle::matmul(h, p(hs.wv)), keep);
      for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < d; ++j) cat(i, head * d + j) = o(i, j);
    }
    Tensor attn = oracle::matmul(cat, p(s.wo));
    Tensor out = x;
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < c.dim; ++j)
        out(i, j) += (attn(i, j) + p(s.bo)[j]) * (s.ls1 ? p(*s.ls1)[j] : 1.0);
    const Tensor h2 = oracle::layernorm(out, p(s.ln2_g), p(s.ln2_b), 1e-6);
    Tensor hid = oracle::matmul(h2, p(s.w1));
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < hid.cols(); ++j) hid(i, j) = oracle::gelu(hid(i, j) + p(s.b1)[j]);
    const Tensor ffn = oracle::matmul(hid, p(s.w2));
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < c.dim; ++j)
        out(i, j) += (ffn(i, j) + p(s.b2)[j]) * (s.ls2 ? p(*s.ls2)[j] : 1.0);
    return out;
  }

  Tensor logits(const Tensor& img) const {
    const auto& l = m.layout();
    Tensor x = embed(img);
    for (std::size_t layer = 0; layer < m.config().layers; ++layer) x = block(x, layer);
    Tensor cls({1, m.config().dim});
    for (std::size_t j = 0; j < cls.cols(); ++j) cls(0, j) = x(0, j);
    const Tensor z = oracle::matmul(oracle::layernorm(cls, p(l.norm_g), p(l.norm_b), 1e-6), p(l.head_w));
    Tensor out = z;
    for (std::size_t j = 0; j < out.cols(); ++j) out(0, j) += p(l.head_b)[j];
    return out;
  }
};

}  // namespace

TEST(Config, ValidationErrors) {
  ModelConfig c = small_config();
  c.dim = 15;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.ffn_ratio = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.drop_path_rate = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.scheme = MaskScheme::unmasked(3, 2);
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.pixel_std = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, JsonRoundTrip) {
  ModelConfig c = small_config(24, 4, 32, {4, 4});
  c.layerscale_eps = 1e-4;
  c.drop_path_rate = 0.1;
  c.scheme = make_scheme(SchemePreset::sch2, 24, 4, 3);
  EXPECT_EQ(model_config_from_json(to_json(c)), c);
}

TEST(Config, PresetNamesInJson) {
  const auto c = model_config_from_json({{"scheme", "sch1"}, {"mask_r", 5}});
  EXPECT_EQ(c.scheme.layers[0][0].kind, MaskKind::hard);
  EXPECT_EQ(c.scheme.layers[0][0].window, 5u);
  EXPECT_EQ(model_config_from_json(nlohmann::json::object()).scheme, MaskScheme::unmasked(4, 4));
  EXPECT_THROW(model_config_from_json({{"scheme", "sch9"}}), ConfigError);
  EXPECT_THROW(model_config_from_json({{"layers", "four"}}), ConfigError);
}

TEST(Layout, ShapesFollowFromConfig) {
  ModelConfig c = small_config(2, 2, 16);
  c.scheme.layers[1][0] = HeadMaskSpec{MaskKind::soft, 3, 0, 0};
  c.layerscale_eps = 1e-4;
  const ParamLayout l = make_layout(c);
  EXPECT_EQ(l.specs[l.patch_w].shape, (Shape{4, 16}));
  EXPECT_EQ(l.specs[l.cls].shape, (Shape{1, 16}));
  EXPECT_EQ(l.specs[l.pos].shape, (Shape{10, 16}));
  EXPECT_EQ(l.specs[l.layers[0].heads[0].wq].shape, (Shape{16, 8}));
  EXPECT_EQ(l.specs[l.layers[0].w1].shape, (Shape{16, 64}));
  EXPECT_EQ(l.specs[l.head_w].shape, (Shape{16, 2}));
  EXPECT_FALSE(l.layers[0].heads[0].theta.has_value());
  ASSERT_TRUE(l.layers[1].heads[0].theta.has_value());
  EXPECT_TRUE(l.layers[0].ls1.has_value());
  std::size_t total = 0;
  for (const auto& s : l.specs) total += shape_numel(s.shape);
  EXPECT_EQ(l.scalar_count(), total);
}

TEST(Init, FollowsDocumentedScheme) {
  ModelConfig c = small_config(2, 2, 64, {8, 8});
  c.layerscale_eps = 1e-4;
  c.scheme.layers[0][1] = HeadMaskSpec{MaskKind::soft, 3, 0, 0};
  const Model m = Model::init(c, 3);
  const auto& l = m.layout();
  const auto& t = m.params().tensors;
  for (double v : t[l.patch_b].storage()) EXPECT_EQ(v, 0.0);
  for (double v : t[l.layers[0].ln1_g].storage()) EXPECT_EQ(v, 1.0);
  for (double v : t[*l.layers[0].ls1].storage()) EXPECT_EQ(v, static_cast<double>(static_cast<float>(1e-4)));
  EXPECT_EQ(t[*l.layers[0].heads[1].theta][0], 0.0);
  const Tensor& w = t[l.layers[0].w1];
  double ss = 0.0, mx = 0.0;
  for (double v : w.storage()) {
    ss += v * v;
    mx = std::max(mx, std::abs(v));
  }
  EXPECT_NEAR(std::sqrt(ss / w.numel()), 0.02 * 0.88, 0.002);  // truncation at 2σ shrinks σ
  EXPECT_LE(mx, 0.04 + 1e-9);
  EXPECT_TRUE(m.params().all_finite());
  EXPECT_EQ(Model::init(c, 3).params(), m.params());
  EXPECT_NE(Model::init(c, 4).params(), m.params());
}

TEST(PatchEmbed, ZeroImageZeroParamsGivesClassAndPosition) {
  ModelConfig c = small_config(1, 1, 4, {1, 1});
  Model m = Model::init(c, 1);
  for (auto& t : m.params().tensors) t = Tensor(t.shape());
  const auto& l = m.layout();
  m.params().tensors[l.cls] = Tensor({1, 4}, {1, 2, 3, 4});
  m.params().tensors[l.pos] = Tensor({2, 4}, {0.5, 0.5, 0.5, 0.5, -1, -2, -3, -4});
  const Tensor x = patch_embed(Tensor({2, 2, 1}), m);
  EXPECT_EQ(x.storage(), (std::vector<double>{1.5, 2.5, 3.5, 4.5, -1, -2, -3, -4}));
}

TEST(PatchEmbed, PermutingPatchesPermutesRows) {
  const ModelConfig c = small_config(1, 1, 8, {2, 2});
  Model m = random_model(c, 2);
  const auto& l = m.layout();
  m.params().tensors[l.pos] = Tensor(m.params().tensors[l.pos].shape());
  Rng rng(3);
  const Tensor img = random_image(c, rng);
  Tensor swapped = img;
  // Swap patch 0 (top-left) with patch 3 (bottom-right).
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t x = 0; x < 2; ++x) std::swap(swapped[y * 4 + x], swapped[(y + 2) * 4 + x + 2]);
  const Tensor a = patch_embed(img, m), b = patch_embed(swapped, m);
  for (std::size_t j = 0; j < 8; ++j) {
    EXPECT_EQ(a(1, j), b(4, j));
    EXPECT_EQ(a(4, j), b(1, j));
    EXPECT_EQ(a(2, j), b(2, j));
  }
}

TEST(PatchEmbed, MatchesScalarOracle) {
  const ModelConfig c = small_config(1, 2, 8, {3, 2});
  const Model m = random_model(c, 4);
  Rng rng(5);
  const Tensor img = random_image(c, rng);
  EXPECT_LT(oracle::max_rel_diff(patch_embed(img, m), Oracle{m}.embed(img)), 1e-12);
}

TEST(PatchEmbed, NonTilingImageThrows) {
  const Model m = Model::init(small_config(), 1);
  EXPECT_THROW(patch_embed(Tensor({5, 6, 1}), m), DimensionError);
  EXPECT_THROW(patch_embed(Tensor({6, 6, 3}), m), DimensionError);
}

TEST(Block, ZeroBranchWeightsGiveIdentity) {
  const ModelConfig c = small_config(1, 2, 8);
  Model m = random_model(c, 6);
  const auto& s = m.layout().layers[0];
  for (auto slot : {s.wo, s.bo, s.w2, s.b2}) m.params().tensors[slot] = Tensor(m.params().tensors[slot].shape());
  Rng rng(7);
  const Tensor x = rng.normal_tensor({10, 8});
  EXPECT_EQ(block_forward(x, m, 0).storage(), x.storage());
}

TEST(Block, ZeroLayerScaleGivesIdentity) {
  ModelConfig c = small_config(1, 2, 8);
  c.layerscale_eps = 0.0;
  Model m = random_model(c, 8);
  const auto& s = m.layout().layers[0];
  m.params().tensors[*s.ls1] = Tensor({8});
  m.params().tensors[*s.ls2] = Tensor({8});
  Rng rng(9);
  const Tensor x = rng.normal_tensor({10, 8});
  EXPECT_EQ(block_forward(x, m, 0).storage(), x.storage());
}

TEST(Block, EvalModeMatchesOracleComposition) {
  ModelConfig c = small_config(2, 2, 8);
  c.drop_path_rate = 0.5;
  c.layerscale_eps = 0.1;
  c.scheme.layers[0][0] = HeadMaskSpec{MaskKind::hard, 3, 0, 0};
  const Model m = random_model(c, 10);
  Rng rng(11);
  const Tensor x = rng.normal_tensor({10, 8});
  EXPECT_LT(oracle::max_rel_diff(block_forward(x, m, 0), Oracle{m}.block(x, 0)), 1e-9);
  EXPECT_LT(oracle::max_rel_diff(block_forward(x, m, 1), Oracle{m}.block(x, 1)), 1e-9);
}

TEST(Block, DropPathOnlyInTraining) {
  ModelConfig c = small_config(2, 2, 8);
  c.drop_path_rate = 0.9;
  const Model m = random_model(c, 12);
  Rng rng(13);
  const Tensor x = rng.normal_tensor({10, 8});
  bool changed = false;
  for (std::uint64_t s = 0; s < 20; ++s) changed |= block_forward(x, m, 1, true, s) != block_forward(x, m, 1);
  EXPECT_TRUE(changed);
  EXPECT_EQ(block_forward(x, m, 1, true, 7), block_forward(x, m, 1, true, 7));
}

class BaselineEquivalence : public ::testing::TestWithParam<int> {};

TEST_P(BaselineEquivalence, AllNoneMatchesIndependentVit) {
  Rng rng(50 + GetParam());
  ModelConfig c = small_config(1 + rng.below(3), 1 + rng.below(3), 0, {1 + rng.below(3), 1 + rng.below(3)});
  c.dim = c.heads * (2 + rng.below(4));
  c.patch_px = 1 + rng.below(3);
  c.channels = 1 + rng.below(2);
  c.classes = 2 + rng.below(3);
  c.scheme = MaskScheme::unmasked(c.layers, c.heads);
  const Model m = random_model(c, GetParam());
  const Tensor img = random_image(c, rng);
  EXPECT_LT(oracle::max_rel_diff(forward(img, m), Oracle{m}.logits(img)), 1e-9);
}

INSTANTIATE_TEST_SUITE_P(Configs, BaselineEquivalence, ::testing::Range(0, 5));

TEST(Forward, MaskedSchemesMatchOracle) {
  ModelConfig c = small_config(3, 2, 8, {4, 4});
  c.scheme = mixed_scheme(3, 2);
  c.scheme.layers[2][1] = HeadMaskSpec{MaskKind::random, 3, 5, 9};
  const Model m = random_model(c, 14);
  Rng rng(15);
  const Tensor img = random_image(c, rng);
  EXPECT_LT(oracle::max_rel_diff(forward(img, m), Oracle{m}.logits(img)), 1e-9);
}

TEST(Forward, DifferentiableAndPlainPathsAgree) {
  ModelConfig c = small_config(2, 2, 8, {3, 3});
  c.scheme = make_scheme(SchemePreset::sch1, 2, 2, 3);
  const Model m = random_model(c, 16);
  Rng rng(17);
  const Tensor img = random_image(c, rng);
  const auto p = param_vars(m.params(), false);
  EXPECT_LT(max_abs_diff(logits(m, p, img).value(), forward(img, m)), 1e-9);
}

TEST(Forward, CaptureHoldsEveryMap) {
  ModelConfig c = small_config(2, 3, 12, {3, 3});
  c.scheme = make_scheme(SchemePreset::sch1, 2, 3, 3);
  const Model m = random_model(c, 18);
  Rng rng(19);
  AttentionRecord rec;
  forward(random_image(c, rng), m, &rec);
  ASSERT_EQ(rec.num_layers(), 2u);
  ASSERT_EQ(rec.num_heads(), 3u);
  EXPECT_EQ(rec.map(1, 2).shape(), (Shape{10, 10}));
  EXPECT_NO_THROW(rec.validate(1e-9));
  EXPECT_EQ(rec.scheme, c.scheme);
}

TEST(Forward, BatchIndependence) {
  const ModelConfig c = small_config();
  const Model m = random_model(c, 20);
  Rng rng(21);
  const Tensor a = random_image(c, rng), b = random_image(c, rng);
  const std::vector<Tensor> dup{a, a}, mixed{b, a};
  const Tensor z = forward_batch(dup, m), w = forward_batch(mixed, m);
  for (std::size_t j = 0; j < c.classes; ++j) {
    EXPECT_EQ(z(0, j), z(1, j));
    EXPECT_EQ(w(1, j), z(0, j));
    EXPECT_EQ(z(0, j), forward(a, m)(0, j));
  }
}

TEST(Forward, LossGradientMatchesFiniteDifferences) {
  ModelConfig c = small_config(4, 2, 32, {3, 3});
  c.scheme = mixed_scheme(4, 2);
  const Model m = Model::init(c, 22);
  Rng rng(23);
  const Tensor img = random_image(c, rng);
  const std::size_t label = 1;
  for (std::size_t slot : {m.layout().pos, m.layout().layers[1].heads[0].wq, m.layout().layers[3].w1,
                           *m.layout().layers[0].heads[0].theta}) {
    auto f = [&](const Var& x) {
      auto p = param_vars(m.params(), false);
      p[slot] = x;
      return cross_entropy(logits(m, p, img), std::span<const std::size_t>(&label, 1));
    };
    std::vector<std::size_t> coords;
    const std::size_t n = m.params().tensors[slot].numel();
    for (int i = 0; i < 6; ++i) coords.push_back(rng.below(n));
    EXPECT_LT(grad_check(f, m.params().tensors[slot], coords), 1e-4) << m.layout().specs[slot].name;
  }
}

TEST(Training, LossDecreasesOnSeparableTask) {
  ModelConfig c = small_config(2, 2, 16, {4, 4});
  const Dataset data = gen_global_task(c.grid, 2, 64, 3);
  std::vector<std::size_t> idx(64);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Model m = Model::init(c, seed);
    AdamW opt(m.layout(), {});
    double first = 0.0, last = 0.0;
    for (int step = 0; step < 50; ++step) {
      const GradResult g = batch_gradient(m, data, idx, 1.0 / 64.0, 0, step, 8, 1);
      if (step == 0) first = g.loss;
      last = g.loss;
      opt.step(m.params(), g.grads, 1e-3);
    }
    if (last < first) return SUCCEED();
  }
  FAIL() << "loss did not decrease for any seed";
}

// ---------------------------------------------------------------------------
// Checkpoints.

TEST(Checkpoint, RoundTripIsBitExact) {
  ModelConfig c = small_config(2, 2, 16);
  c.scheme = mixed_scheme(2, 2);
  c.layerscale_eps = 1e-4;
  const Model m = Model::init(c, 30);
  const auto path = temp_path("rt.mait");
  save_checkpoint(m, path);
  const Model back = load_checkpoint(path);
  EXPECT_EQ(back.config(), c);
  EXPECT_EQ(back.params(), m.params());
  Rng rng(31);
  const Tensor img = random_image(c, rng);
  EXPECT_EQ(forward(img, back).storage(), forward(img, m).storage());
}

TEST(Checkpoint, FileSizeFollowsManifest) {
  const Model m = Model::init(small_config(2, 2, 16), 32);
  const auto path = temp_path("size.mait");
  save_checkpoint(m, path);
  const auto bytes = binio::read_file(path.string());
  std::uint32_t header = 0;
  std::memcpy(&header, bytes.data() + 8, 4);
  EXPECT_EQ(bytes.size(), kCheckpointPreamble + header + 4 * m.layout().scalar_count());
  EXPECT_EQ(std::filesystem::file_size(path), bytes.size());
}

TEST(Checkpoint, DistinctLoadErrors) {
  const Model m = Model::init(small_config(), 33);
  const auto good = temp_path("good.mait"), bad = temp_path("bad.mait");
  save_checkpoint(m, good);
  const auto raw = binio::read_file(good.string());
  const std::string bytes(raw.begin(), raw.end());

  auto write = [&](const std::string& b) { binio::write_file(bad.string(), std::vector<char>(b.begin(), b.end())); };
  std::string magic = bytes;
  magic[0] = 'X';
  write(magic);
  EXPECT_THROW(load_checkpoint(bad), CheckpointMagicError);

  std::string version = bytes;
  version[4] = 9;
  write(version);
  EXPECT_THROW(load_checkpoint(bad), CheckpointVersionError);

  write(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(load_checkpoint(bad), CheckpointTruncatedError);
  write(bytes.substr(0, 6));
  EXPECT_THROW(load_checkpoint(bad), CheckpointTruncatedError);

  std::string header = bytes;
  header[kCheckpointPreamble] = '#';
  write(header);
  EXPECT_THROW(load_checkpoint(bad), CheckpointFormatError);
}
