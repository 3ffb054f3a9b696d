// SPDX-License-Identifier: Apache-2.0
#include "mait/harness/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "mait/numerics/errors.hpp"
#include "mait/numerics/parallel.hpp"
#include "mait/numerics/rng.hpp"

namespace mait {

namespace {

constexpr std::size_t kEvalChunks = 8;

// Splits [0, n) into `chunks` contiguous ranges fixed by (n, chunks) only.
std::pair<std::size_t, std::size_t> chunk_range(std::size_t n, std::size_t chunks, std::size_t k) {
  return {n * k / chunks, n * (k + 1) / chunks};
}

std::size_t argmax(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

void add_into(AttentionRecord& acc, const AttentionRecord& r) {
  if (acc.maps.empty()) {
    acc = r;
    return;
  }
  for (std::size_t l = 0; l < acc.maps.size(); ++l)
    for (std::size_t h = 0; h < acc.maps[l].size(); ++h)
      for (std::size_t i = 0; i < acc.maps[l][h].numel(); ++i) acc.maps[l][h][i] += r.maps[l][h][i];
}

struct EvalOut {
  Evaluation eval;
  AttentionRecord probe;
};

EvalOut eval_impl(const Model& model, const Dataset& data, std::size_t probe_samples,
                  std::size_t workers) {
  const std::size_t n = data.size();
  const std::size_t probes = std::min(probe_samples, n);
  struct Part {
    double loss = 0.0;
    std::size_t correct = 0;
    AttentionRecord probe;
  };
  std::vector<Part> parts(kEvalChunks);
  const auto p = param_vars(model.params(), false);
  parallel_blocks(kEvalChunks, workers, [&](std::size_t cb, std::size_t ce) {
    for (std::size_t k = cb; k < ce; ++k) {
      auto [b, e] = chunk_range(n, kEvalChunks, k);
      for (std::size_t i = b; i < e; ++i) {
        AttentionRecord rec;
        ForwardOptions opts;
        if (i < probes) opts.capture = &rec;
        const Var z = logits(model, p, data.images[i], opts);
        const std::size_t label = data.labels[i];
        parts[k].loss += cross_entropy(z, std::span<const std::size_t>(&label, 1)).value()[0];
        if (argmax(z.value().data()) == label) ++parts[k].correct;
        if (i < probes) add_into(parts[k].probe, rec);
      }
    }
  });
  EvalOut out;
  std::size_t correct = 0;
  double loss = 0.0;
  for (auto& part : parts) {
    loss += part.loss;
    correct += part.correct;
    if (!part.probe.maps.empty()) add_into(out.probe, part.probe);
  }
  if (n > 0) {
    out.eval.loss = loss / static_cast<double>(n);
    out.eval.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  }
  if (probes > 0) {
    const double inv = 1.0 / static_cast<double>(probes);
    for (auto& row : out.probe.maps)
      for (auto& m : row)
        for (double& v : m.storage()) v *= inv;
  }
  return out;
}

}  // namespace

TrainConfig TrainConfig::toy() {
  TrainConfig c;
  c.epochs = 20;
  c.batch = 32;
  c.base_lr = 8e-3;  // peak 5e-4 at batch 32
  c.min_lr = 1e-5;
  c.warmup_epochs = 2;
  return c;
}

void TrainConfig::validate() const {
  if (batch < 1) throw ConfigError("batch must be positive");
  if (grad_chunks < 1) throw ConfigError("grad_chunks must be positive");
  if (!(base_lr > 0.0)) throw ConfigError("base_lr must be positive");
  if (als_window % 2 == 0) throw ConfigError("als_window must be odd");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch", c.batch},
          {"base_lr", c.base_lr},
          {"min_lr", c.min_lr},
          {"warmup_epochs", c.warmup_epochs},
          {"weight_decay", c.adamw.weight_decay},
          {"beta1", c.adamw.beta1},
          {"beta2", c.adamw.beta2},
          {"grad_chunks", c.grad_chunks},
          {"workers", c.workers},
          {"probe_samples", c.probe_samples},
          {"als_window", c.als_window}};
}

TrainConfig train_config_from_json(const nlohmann::json& doc, TrainConfig c) {
  try {
    c.epochs = doc.value("epochs", c.epochs);
    c.batch = doc.value("batch", c.batch);
    c.base_lr = doc.value("base_lr", c.base_lr);
    c.min_lr = doc.value("min_lr", c.min_lr);
    c.warmup_epochs = doc.value("warmup_epochs", c.warmup_epochs);
    c.adamw.weight_decay = doc.value("weight_decay", c.adamw.weight_decay);
    c.adamw.beta1 = doc.value("beta1", c.adamw.beta1);
    c.adamw.beta2 = doc.value("beta2", c.adamw.beta2);
    c.grad_chunks = doc.value("grad_chunks", c.grad_chunks);
    c.workers = doc.value("workers", c.workers);
    c.probe_samples = doc.value("probe_samples", c.probe_samples);
    c.als_window = doc.value("als_window", c.als_window);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed train config: ") + e.what());
  }
  c.validate();
  return c;
}

Evaluation evaluate(const Model& model, const Dataset& data, std::size_t workers) {
  return eval_impl(model, data, 0, workers).eval;
}

AttentionRecord probe_record(const Model& model, const Dataset& data, std::size_t samples,
                             std::size_t workers) {
  if (std::min(samples, data.size()) == 0) throw ContractError("probe_record: no samples");
  return eval_impl(model, data.head(samples), samples, workers).probe;
}

GradResult batch_gradient(const Model& model, const Dataset& data, std::span<const std::size_t> indices,
                          double weight, std::uint64_t drop_seed, std::uint64_t step_key,
                          std::size_t chunks, std::size_t workers) {
  const std::size_t n = indices.size();
  struct Part {
    std::vector<Var> vars;
    double loss = 0.0;
    std::size_t correct = 0;
  };
  std::vector<Part> parts(chunks);
  parallel_blocks(chunks, workers, [&](std::size_t cb, std::size_t ce) {
    for (std::size_t k = cb; k < ce; ++k) {
      auto [b, e] = chunk_range(n, chunks, k);
      Part& part = parts[k];
      part.vars = param_vars(model.params(), true);
      for (std::size_t i = b; i < e; ++i) {
        const std::size_t idx = indices[i];
        ForwardOptions opts;
        opts.train = true;
        opts.drop_seed = drop_seed;
        opts.sample_key = step_key * 1'000'003ULL + i;
        const Var z = logits(model, part.vars, data.images[idx], opts);
        const std::size_t label = data.labels[idx];
        const Var loss = scale(cross_entropy(z, std::span<const std::size_t>(&label, 1)), weight);
        part.loss += loss.value()[0];
        if (argmax(z.value().data()) == label) ++part.correct;
        backward(loss);
      }
    }
  });
  GradResult out;
  const auto& specs = model.layout().specs;
  out.grads.reserve(specs.size());
  for (const auto& s : specs) out.grads.emplace_back(s.shape);
  for (auto& part : parts) {
    out.loss += part.loss;
    out.correct += part.correct;
    for (std::size_t t = 0; t < specs.size(); ++t) {
      const NodePtr& node = part.vars[t].node();
      if (node->grad.numel() != node->value.numel()) continue;
      for (std::size_t i = 0; i < out.grads[t].numel(); ++i) out.grads[t][i] += node->grad[i];
    }
  }
  return out;
}

TrainResult train(const ModelConfig& config, const TrainConfig& tc, const Dataset& train_set,
                  const Dataset& val_set, std::uint64_t seed, const EpochCallback& on_epoch) {
  config.validate();
  return train(Model::init(config, seed), tc, train_set, val_set, seed, on_epoch);
}

TrainResult train(Model model, const TrainConfig& tc, const Dataset& train_set,
                  const Dataset& val_set, std::uint64_t seed, const EpochCallback& on_epoch) {
  tc.validate();
  const auto& cfg = model.config();
  for (const Dataset* d : {&train_set, &val_set}) {
    d->validate(cfg.classes);
    if (d->size() > 0 && (d->height != cfg.image_height() || d->width != cfg.image_width() ||
                          d->channels != cfg.channels)) {
      throw ConfigError("dataset images are " + std::to_string(d->height) + "x" +
                        std::to_string(d->width) + "x" + std::to_string(d->channels) +
                        ", model expects " + std::to_string(cfg.image_height()) + "x" +
                        std::to_string(cfg.image_width()) + "x" + std::to_string(cfg.channels));
    }
  }
  if (tc.epochs > 0 && train_set.size() == 0) throw ConfigError("empty training set");

  const std::size_t n = train_set.size();
  const std::size_t steps_per_epoch = n == 0 ? 0 : (n + tc.batch - 1) / tc.batch;
  CosineSchedule sched{tc.peak_lr(), tc.min_lr, tc.warmup_epochs * steps_per_epoch,
                       std::max<std::size_t>(1, tc.epochs * steps_per_epoch)};
  AdamW opt(model.layout(), tc.adamw);
  const std::uint64_t drop_seed = Rng::derive(seed, 0xd7).next();

  TrainResult result{model, {}, {}};
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    Rng shuffler = Rng::derive(seed, 0x5f, epoch);
    shuffler.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < n; b += tc.batch) {
      const std::size_t e = std::min(n, b + tc.batch);
      const std::span<const std::size_t> idx(order.data() + b, e - b);
      GradResult g = batch_gradient(result.model, train_set, idx, 1.0 / static_cast<double>(idx.size()),
                                    drop_seed, step, tc.grad_chunks, tc.workers);
      opt.step(result.model.params(), g.grads, sched.at(step));
      loss_sum += g.loss * static_cast<double>(idx.size());
      correct += g.correct;
      ++step;
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(n);
    m.train_acc = static_cast<double>(correct) / static_cast<double>(n);
    const std::size_t probes = std::min(tc.probe_samples, val_set.size());
    EvalOut ev = eval_impl(result.model, val_set, probes, tc.workers);
    m.val_loss = ev.eval.loss;
    m.val_acc = ev.eval.accuracy;
    if (probes > 0) {
      m.als = als_table(ev.probe, tc.als_window);
      result.probe = std::move(ev.probe);
    }
    result.history.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  if (tc.epochs == 0 && val_set.size() > 0 && tc.probe_samples > 0) {
    result.probe = eval_impl(result.model, val_set, tc.probe_samples, tc.workers).probe;
  }
  return result;
}

void write_metrics_csv(const std::vector<EpochMetrics>& history, std::size_t layers, std::size_t heads,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,train_loss,train_acc,val_loss,val_acc";
  for (std::size_t l = 0; l < layers; ++l)
    for (std::size_t h = 0; h < heads; ++h) out << ",als_l" << l << "_h" << h;
  out << '\n' << std::setprecision(17);
  for (const auto& m : history) {
    out << m.epoch << ',' << m.train_loss << ',' << m.train_acc << ',' << m.val_loss << ',' << m.val_acc;
    for (std::size_t l = 0; l < layers; ++l)
      for (std::size_t h = 0; h < heads; ++h)
        out << ',' << (l < m.als.size() && h < m.als[l].size() ? m.als[l][h] : std::nan(""));
    out << '\n';
  }
}

}  // namespace mait
