// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mait/harness/dataset.hpp"
#include "mait/harness/train.hpp"
#include "mait/maskgen/scheme.hpp"
#include "mait/metrics/locality.hpp"
#include "mait/metrics/record.hpp"
#include "mait/model/config.hpp"

namespace mait {

struct SearchConfig {
  double high_threshold = 0.65;
  double low_threshold = 0.35;
  std::size_t probe_epochs = 5;
  std::size_t window = 3;
  std::uint64_t seed = 0;
  /// Wall-clock budget of one trainer invocation; zero disables the limit.
  std::chrono::milliseconds trainer_timeout{0};
  /// Validation samples whose attention maps feed the ALS measurement.
  std::size_t probe_samples = 256;

  /// Throws ConfigError unless 0 < low < high < 1 and window is odd.
  void validate() const;
};

nlohmann::json to_json(const SearchConfig& cfg);
SearchConfig search_config_from_json(const nlohmann::json& doc, SearchConfig base = {});

class SearchTimeout : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LayerAction { mask_all, keep_single, remove };

std::string to_string(LayerAction a);
LayerAction layer_action_from_string(const std::string& s);

/// Step-2 rule for one layer. Values equal to a threshold keep the single
/// head.
LayerAction assign_action(double head0_als, const SearchConfig& cfg);

/// Head 0 hard-masked in every layer.
MaskScheme initial_scheme(std::size_t layers, std::size_t heads, std::size_t window);

/// Step-2 scheme from the head-0 ALS of every layer.
MaskScheme assign_masks(const std::vector<LayerAction>& actions, std::size_t heads, std::size_t window);

/// Unmasks heads with ALS below the low threshold, only in mask_all layers.
MaskScheme calibrate(const MaskScheme& step2, const std::vector<LayerAction>& actions,
                     const AlsTable& als, const SearchConfig& cfg);

/// Outcome of the decision rules on measured tables. `initial` is the table
/// measured under the initial scheme; `retrained` the one measured under
/// the step-2 scheme.
struct SearchDecision {
  std::vector<LayerAction> actions;
  MaskScheme step2;
  MaskScheme final_scheme;
  /// (layer, head) pairs unmasked by calibration.
  std::vector<std::pair<std::size_t, std::size_t>> removed;
};
SearchDecision decide(const AlsTable& initial, const AlsTable& retrained, const SearchConfig& cfg,
                      std::size_t heads);

struct SearchIteration {
  std::string stage;  // "initialization", "assignment" or "calibration"
  MaskScheme scheme;  // scheme the trainer ran with
  AlsTable als;       // measured on the trainer's record
};

struct SearchTrace {
  SearchConfig config;
  std::size_t layers = 0, heads = 0;
  std::vector<SearchIteration> iterations;
  std::vector<LayerAction> actions;
  std::vector<std::pair<std::size_t, std::size_t>> removed;
  MaskScheme final_scheme;

  std::size_t trainer_calls() const { return iterations.size(); }
};

nlohmann::json to_json(const SearchTrace& trace);
SearchTrace search_trace_from_json(const nlohmann::json& doc);
void save_trace(const SearchTrace& trace, const std::filesystem::path& path);
SearchTrace load_trace(const std::filesystem::path& path);

/// Recomputes the final scheme from the recorded tables alone.
MaskScheme replay(const SearchTrace& trace);

/// Trains a model under the given scheme and returns the averaged attention
/// maps of the probe set.
using Trainer = std::function<AttentionRecord(const MaskScheme&)>;

struct SearchResult {
  MaskScheme scheme;
  SearchTrace trace;
};

/// Initialization, assignment and calibration. The trainer runs once with
/// the initial scheme and once with the step-2 scheme; a third run trains
/// the calibrated scheme only when calibration removed a head.
SearchResult quick_search(const Trainer& trainer, const SearchConfig& cfg, std::size_t layers,
                          std::size_t heads);

/// Trainer that runs `probe_epochs` of `train` from a fresh initialization
/// of `base` with the candidate scheme.
Trainer make_probe_trainer(const ModelConfig& base, const TrainConfig& tc, const Dataset& train_set,
                           const Dataset& val_set, const SearchConfig& cfg);

struct SoftMaskResult {
  TrainResult train;
  std::vector<Model::SoftAlpha> alphas;
};

/// Trains all parameters, including every soft-mask theta, end to end.
/// Throws ContractError when the model has no soft head.
SoftMaskResult train_soft_masks(Model model, const TrainConfig& tc, const Dataset& train_set,
                                const Dataset& val_set, std::uint64_t seed,
                                const EpochCallback& on_epoch = {});

}  // namespace mait
