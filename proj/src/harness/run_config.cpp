// SPDX-License-Identifier: Apache-2.0
#include "mait/harness/run_config.hpp"

#include <fstream>

#include "mait/numerics/errors.hpp"
#include "mait/numerics/rng.hpp"

namespace mait {

void DataConfig::validate() const {
  if (task != "local" && task != "global") throw ConfigError("data.task must be 'local' or 'global'");
}

nlohmann::json to_json(const RunConfig& c) {
  return {{"model", to_json(c.model)},
          {"train", to_json(c.train)},
          {"search", to_json(c.search)},
          {"data", {{"task", c.data.task}, {"train_samples", c.data.train_samples},
                    {"val_samples", c.data.val_samples}}}};
}

RunConfig run_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("run config must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (key != "model" && key != "train" && key != "search" && key != "data")
      throw ConfigError("unknown config section '" + key + "'");
  }
  RunConfig c;
  if (doc.contains("model")) c.model = model_config_from_json(doc["model"]);
  if (doc.contains("train")) c.train = train_config_from_json(doc["train"]);
  if (doc.contains("search")) c.search = search_config_from_json(doc["search"]);
  if (doc.contains("data")) {
    const auto& d = doc["data"];
    try {
      c.data.task = d.value("task", c.data.task);
      c.data.train_samples = d.value("train_samples", c.data.train_samples);
      c.data.val_samples = d.value("val_samples", c.data.val_samples);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed data config: ") + e.what());
    }
  }
  c.data.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(doc);
}

Dataset generate(const DataConfig& data, const ModelConfig& model, std::size_t samples, std::uint64_t seed) {
  data.validate();
  if (data.task == "local") return gen_local_task(model.grid, model.patch_px, samples, seed, model.channels);
  return gen_global_task(model.grid, model.patch_px, samples, seed, model.channels);
}

Splits make_splits(const DataConfig& data, const ModelConfig& model, std::uint64_t seed) {
  const std::uint64_t train_seed = Rng::derive(seed, 0x7472).next();
  const std::uint64_t val_seed = Rng::derive(seed, 0x76616c).next();
  return {generate(data, model, data.train_samples, train_seed),
          generate(data, model, data.val_samples, val_seed)};
}

}  // namespace mait
