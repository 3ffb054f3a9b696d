// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "mait/harness/dataset.hpp"
#include "mait/harness/train.hpp"
#include "mait/model/config.hpp"
#include "mait/search/search.hpp"

namespace mait {

/// Synthetic data settings. `task` is "local" or "global".
struct DataConfig {
  std::string task = "local";
  std::size_t train_samples = 2048;
  std::size_t val_samples = 512;

  void validate() const;
};

/// Everything one CLI run reads from its config file:
/// `{"model": {...}, "train": {...}, "search": {...}, "data": {...}}`.
struct RunConfig {
  ModelConfig model;
  TrainConfig train = TrainConfig::toy();
  SearchConfig search;
  DataConfig data;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Unknown top-level sections are rejected; missing ones keep defaults.
RunConfig run_config_from_json(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);

/// Train and validation splits drawn from disjoint seed streams.
struct Splits {
  Dataset train, val;
};
Dataset generate(const DataConfig& data, const ModelConfig& model, std::size_t samples, std::uint64_t seed);
Splits make_splits(const DataConfig& data, const ModelConfig& model, std::uint64_t seed);

}  // namespace mait
