// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include <nlohmann/json.hpp>

#include "mait/harness/dataset.hpp"
#include "mait/metrics/locality.hpp"
#include "mait/metrics/record.hpp"
#include "mait/model/model.hpp"
#include "mait/model/optimizer.hpp"

namespace mait {

/// Reference batch size of the learning-rate scaling rule.
inline constexpr double kLrReferenceBatch = 512.0;

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch = 32;
  /// Peak learning rate is base_lr · batch / 512.
  double base_lr = 5e-4;
  double min_lr = 1e-6;
  std::size_t warmup_epochs = 2;
  AdamWConfig adamw;
  /// Each batch is cut into this many gradient chunks, summed in chunk
  /// order; fixing it (not the worker count) pins the arithmetic.
  std::size_t grad_chunks = 8;
  std::size_t workers = 1;
  /// Samples of the validation set used to capture attention maps each epoch.
  std::size_t probe_samples = 64;
  /// Window side of the ALS measurement neighborhood.
  std::size_t als_window = 3;

  double peak_lr() const { return base_lr * static_cast<double>(batch) / kLrReferenceBatch; }

  /// Desk-scale defaults for the toy locality task.
  static TrainConfig toy();
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& doc, TrainConfig base = TrainConfig::toy());

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0, train_acc = 0.0;
  double val_loss = 0.0, val_acc = 0.0;
  AlsTable als;  // [layer][head], on the probe samples
};

struct TrainResult {
  Model model;
  std::vector<EpochMetrics> history;
  /// Mean attention record of the final model over the probe samples.
  AttentionRecord probe;
};

/// Eval-mode loss and accuracy.
Evaluation evaluate(const Model& model, const Dataset& data, std::size_t workers = 1);

/// Mean attention record over the first `samples` items.
AttentionRecord probe_record(const Model& model, const Dataset& data, std::size_t samples,
                             std::size_t workers = 1);

/// Sum of per-sample cross-entropy gradients over `indices`, scaled by
/// `weight`. Returned in layout order with the summed (scaled) loss and
/// number of correct predictions.
struct GradResult {
  std::vector<Tensor> grads;
  double loss = 0.0;
  std::size_t correct = 0;
};
GradResult batch_gradient(const Model& model, const Dataset& data, std::span<const std::size_t> indices,
                          double weight, std::uint64_t drop_seed, std::uint64_t step_key,
                          std::size_t chunks, std::size_t workers);

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Trains from Model::init(config, seed). Deterministic per seed.
TrainResult train(const ModelConfig& config, const TrainConfig& tc, const Dataset& train_set,
                  const Dataset& val_set, std::uint64_t seed, const EpochCallback& on_epoch = {});

/// Continues training an existing model.
TrainResult train(Model model, const TrainConfig& tc, const Dataset& train_set,
                  const Dataset& val_set, std::uint64_t seed, const EpochCallback& on_epoch = {});

/// Header `epoch,train_loss,train_acc,val_loss,val_acc,als_l{l}_h{h}...`.
void write_metrics_csv(const std::vector<EpochMetrics>& history, std::size_t layers, std::size_t heads,
                       const std::filesystem::path& path);

}  // namespace mait
