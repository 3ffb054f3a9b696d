// SPDX-License-Identifier: Apache-2.0
#include "mait/model/model.hpp"

#include "mait/attention/attention.hpp"
#include "mait/numerics/errors.hpp"
#include "mait/numerics/ops.hpp"
#include "mait/numerics/rng.hpp"

namespace mait {

namespace {

constexpr double kInitSigma = 0.02;

enum class Init { trunc_normal, zeros, ones, layerscale };

struct LayoutBuilder {
  ParamLayout layout;
  std::vector<Init> inits;

  std::size_t add(std::string name, Shape shape, Init init, bool decay = false) {
    layout.specs.push_back({std::move(name), std::move(shape), decay});
    inits.push_back(init);
    return layout.specs.size() - 1;
  }
};

LayoutBuilder build(const ModelConfig& cfg) {
  cfg.validate();
  LayoutBuilder b;
  auto& l = b.layout;
  const std::size_t dim = cfg.dim, d = cfg.head_dim(), hidden = cfg.dim * cfg.ffn_ratio;
  l.patch_w = b.add("patch.w", {cfg.patch_features(), dim}, Init::trunc_normal, true);
  l.patch_b = b.add("patch.b", {dim}, Init::zeros);
  l.cls = b.add("cls", {1, dim}, Init::trunc_normal);
  l.pos = b.add("pos", {cfg.grid.tokens(), dim}, Init::trunc_normal);
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    const std::string pre = "layers." + std::to_string(i) + ".";
    LayerSlots s;
    s.ln1_g = b.add(pre + "ln1.g", {dim}, Init::ones);
    s.ln1_b = b.add(pre + "ln1.b", {dim}, Init::zeros);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const std::string hp = pre + "heads." + std::to_string(h) + ".";
      HeadSlots hs;
      hs.wq = b.add(hp + "wq", {dim, d}, Init::trunc_normal, true);
      hs.wk = b.add(hp + "wk", {dim, d}, Init::trunc_normal, true);
      hs.wv = b.add(hp + "wv", {dim, d}, Init::trunc_normal, true);
      if (cfg.scheme.layers[i][h].kind == MaskKind::soft) hs.theta = b.add(hp + "theta", {1}, Init::zeros);
      s.heads.push_back(hs);
    }
    s.wo = b.add(pre + "wo", {dim, dim}, Init::trunc_normal, true);
    s.bo = b.add(pre + "bo", {dim}, Init::zeros);
    s.ln2_g = b.add(pre + "ln2.g", {dim}, Init::ones);
    s.ln2_b = b.add(pre + "ln2.b", {dim}, Init::zeros);
    s.w1 = b.add(pre + "ffn.w1", {dim, hidden}, Init::trunc_normal, true);
    s.b1 = b.add(pre + "ffn.b1", {hidden}, Init::zeros);
    s.w2 = b.add(pre + "ffn.w2", {hidden, dim}, Init::trunc_normal, true);
    s.b2 = b.add(pre + "ffn.b2", {dim}, Init::zeros);
    if (cfg.layerscale_eps) {
      s.ls1 = b.add(pre + "ls1", {dim}, Init::layerscale);
      s.ls2 = b.add(pre + "ls2", {dim}, Init::layerscale);
    }
    l.layers.push_back(std::move(s));
  }
  l.norm_g = b.add("norm.g", {dim}, Init::ones);
  l.norm_b = b.add("norm.b", {dim}, Init::zeros);
  l.head_w = b.add("head.w", {dim, cfg.classes}, Init::trunc_normal, true);
  l.head_b = b.add("head.b", {cfg.classes}, Init::zeros);
  return b;
}

}  // namespace

std::size_t ParamLayout::scalar_count() const {
  std::size_t n = 0;
  for (const auto& s : specs) n += shape_numel(s.shape);
  return n;
}

ParamLayout make_layout(const ModelConfig& cfg) { return build(cfg).layout; }

void ModelParams::round_to_f32() {
  for (auto& t : tensors)
    for (double& v : t.storage()) v = static_cast<double>(static_cast<float>(v));
}

bool ModelParams::all_finite() const {
  for (const auto& t : tensors)
    if (!t.all_finite()) return false;
  return true;
}

Model::Model(ModelConfig config, ModelParams params)
    : config_(std::move(config)), layout_(make_layout(config_)), params_(std::move(params)) {
  if (params_.tensors.size() != layout_.specs.size()) {
    throw ConfigError("model expects " + std::to_string(layout_.specs.size()) +
                      " parameter tensors, got " + std::to_string(params_.tensors.size()));
  }
  for (std::size_t i = 0; i < layout_.specs.size(); ++i) {
    if (params_.tensors[i].shape() != layout_.specs[i].shape) {
      throw DimensionError("parameter " + layout_.specs[i].name + " has shape " +
                           shape_string(params_.tensors[i].shape()) + ", expected " +
                           shape_string(layout_.specs[i].shape));
    }
  }
  auto keep = std::make_shared<std::vector<std::vector<std::optional<Tensor>>>>();
  for (const auto& row : config_.scheme.layers) {
    auto& out = keep->emplace_back();
    for (const auto& spec : row) {
      if (spec.kind == MaskKind::none) {
        out.emplace_back();
      } else {
        out.emplace_back(instantiate(spec, config_.grid).binary_matrix());
      }
    }
  }
  keep_ = std::move(keep);
}

Model Model::init(const ModelConfig& config, std::uint64_t seed) {
  const LayoutBuilder b = build(config);
  Rng rng(seed);
  ModelParams p;
  for (std::size_t i = 0; i < b.layout.specs.size(); ++i) {
    const Shape& shape = b.layout.specs[i].shape;
    switch (b.inits[i]) {
      case Init::trunc_normal: p.tensors.push_back(rng.trunc_normal_tensor(shape, kInitSigma)); break;
      case Init::zeros: p.tensors.emplace_back(shape, 0.0); break;
      case Init::ones: p.tensors.emplace_back(shape, 1.0); break;
      case Init::layerscale: p.tensors.emplace_back(shape, *config.layerscale_eps); break;
    }
  }
  p.round_to_f32();
  return Model(config, std::move(p));
}

const Tensor* Model::keep_matrix(std::size_t layer, std::size_t head) const {
  const auto& k = (*keep_).at(layer).at(head);
  return k ? &*k : nullptr;
}

std::vector<Model::SoftAlpha> Model::soft_alphas() const {
  std::vector<SoftAlpha> out;
  for (std::size_t l = 0; l < layout_.layers.size(); ++l)
    for (std::size_t h = 0; h < layout_.layers[l].heads.size(); ++h)
      if (auto t = layout_.layers[l].heads[h].theta) out.push_back({l, h, sigmoid(params_.tensors[*t][0])});
  return out;
}

std::vector<Var> param_vars(const ModelParams& params, bool requires_grad) {
  std::vector<Var> out;
  out.reserve(params.tensors.size());
  for (const auto& t : params.tensors) out.push_back(Var::leaf(t, requires_grad));
  return out;
}

Tensor patchify(const Tensor& image, const ModelConfig& cfg) {
  const std::size_t px = cfg.patch_px, ch = cfg.channels;
  if (image.rank() != 3 || image.extent(2) != ch || image.extent(0) % px != 0 ||
      image.extent(1) % px != 0 || image.extent(0) / px != cfg.grid.rows ||
      image.extent(1) / px != cfg.grid.cols) {
    throw DimensionError("image " + shape_string(image.shape()) + " does not tile a " +
                         std::to_string(cfg.grid.rows) + "x" + std::to_string(cfg.grid.cols) +
                         " grid of " + std::to_string(px) + "px patches with " +
                         std::to_string(ch) + " channels");
  }
  const std::size_t width = image.extent(1);
  const double inv_std = 1.0 / cfg.pixel_std;
  Tensor out({cfg.grid.patches(), cfg.patch_features()});
  for (std::size_t n = 0; n < cfg.grid.patches(); ++n) {
    const std::size_t r0 = cfg.grid.row_of(n) * px, c0 = cfg.grid.col_of(n) * px;
    std::size_t f = 0;
    for (std::size_t y = 0; y < px; ++y)
      for (std::size_t x = 0; x < px; ++x)
        for (std::size_t c = 0; c < ch; ++c) out(n, f++) = (image[((r0 + y) * width + (c0 + x)) * ch + c] - cfg.pixel_mean) * inv_std;
  }
  return out;
}

Var embed(const Model& model, std::span<const Var> p, const Tensor& image) {
  const auto& l = model.layout();
  const Var patches = Var::constant(patchify(image, model.config()));
  const Var tokens = add_bias(matmul(patches, p[l.patch_w]), p[l.patch_b]);
  return add(concat_rows(p[l.cls], tokens), p[l.pos]);
}

namespace {

bool drop_branch(const ForwardOptions& opts, double rate, std::size_t layer, std::uint64_t branch) {
  if (!opts.train || rate <= 0.0) return false;
  Rng rng = Rng::derive(opts.drop_seed, opts.sample_key, layer * 2 + branch);
  return rng.uniform() < rate;
}

// Residual branch after LayerScale and stochastic depth; empty when dropped.
Var finish_branch(const Var& y, const std::optional<std::size_t>& ls, std::span<const Var> p,
                  const ForwardOptions& opts, double rate, std::size_t layer, std::uint64_t which,
                  bool& dropped) {
  dropped = drop_branch(opts, rate, layer, which);
  if (dropped) return {};
  Var out = ls ? mul_cols(y, p[*ls]) : y;
  if (opts.train && rate > 0.0) out = scale(out, 1.0 / (1.0 - rate));
  return out;
}

}  // namespace

Var block(const Model& model, std::span<const Var> p, std::size_t layer, const Var& x,
          const ForwardOptions& opts, std::vector<Tensor>* maps) {
  const auto& s = model.layout().layers.at(layer);
  const std::size_t heads = s.heads.size();
  const double rate = model.config().drop_path_at(layer);

  std::vector<HeadVars> hv(heads);
  std::vector<const Tensor*> keep(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    hv[h] = {p[s.heads[h].wq], p[s.heads[h].wk], p[s.heads[h].wv],
             s.heads[h].theta ? p[*s.heads[h].theta] : Var{}};
    keep[h] = model.keep_matrix(layer, h);
  }

  bool dropped = false;
  Var out = x;
  // Attention maps are still needed when the branch is dropped and a
  // capture was requested, so the branch is computed before the draw.
  const Var attn = add_bias(mha(layernorm(x, p[s.ln1_g], p[s.ln1_b]), hv, p[s.wo], keep, maps), p[s.bo]);
  const Var a = finish_branch(attn, s.ls1, p, opts, rate, layer, 0, dropped);
  if (!dropped) out = add(out, a);

  if (drop_branch(opts, rate, layer, 1)) return out;
  const Var h1 = gelu(add_bias(matmul(layernorm(out, p[s.ln2_g], p[s.ln2_b]), p[s.w1]), p[s.b1]));
  const Var ffn = add_bias(matmul(h1, p[s.w2]), p[s.b2]);
  const Var f = finish_branch(ffn, s.ls2, p, opts, rate, layer, 1, dropped);
  return add(out, f);
}

Var logits(const Model& model, std::span<const Var> p, const Tensor& image,
           const ForwardOptions& opts) {
  const auto& cfg = model.config();
  const auto& l = model.layout();
  Var x = embed(model, p, image);
  if (opts.capture) {
    opts.capture->grid = cfg.grid;
    opts.capture->scheme = cfg.scheme;
    opts.capture->maps.assign(cfg.layers, {});
  }
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    x = block(model, p, i, x, opts, opts.capture ? &opts.capture->maps[i] : nullptr);
  }
  const Var cls = layernorm(select_row(x, 0), p[l.norm_g], p[l.norm_b]);
  return add_bias(matmul(cls, p[l.head_w]), p[l.head_b]);
}

Tensor patch_embed(const Tensor& image, const Model& model) {
  const auto p = param_vars(model.params(), false);
  return embed(model, p, image).value();
}

Tensor block_forward(const Tensor& x, const Model& model, std::size_t layer, bool train_mode,
                     std::uint64_t drop_seed) {
  const auto p = param_vars(model.params(), false);
  ForwardOptions opts;
  opts.train = train_mode;
  opts.drop_seed = drop_seed;
  return block(model, p, layer, Var::constant(x), opts).value();
}

Tensor forward(const Tensor& image, const Model& model, AttentionRecord* capture) {
  const auto p = param_vars(model.params(), false);
  ForwardOptions opts;
  opts.capture = capture;
  return logits(model, p, image, opts).value();
}

Tensor forward_batch(std::span<const Tensor> images, const Model& model) {
  const auto p = param_vars(model.params(), false);
  const std::size_t classes = model.config().classes;
  Tensor out({images.size(), classes});
  for (std::size_t b = 0; b < images.size(); ++b) {
    const Tensor z = logits(model, p, images[b]).value();
    for (std::size_t c = 0; c < classes; ++c) out(b, c) = z[c];
  }
  return out;
}

}  // namespace mait
