// SPDX-License-Identifier: Apache-2.0
#include "mait/search/search.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <memory>
#include <thread>

#include "mait/numerics/errors.hpp"

namespace mait {

namespace {

constexpr const char* kTraceFormat = "mait.search_trace";

HeadMaskSpec hard(std::size_t window) { return {MaskKind::hard, window, 0, 0}; }

AttentionRecord run_trainer(const Trainer& trainer, const MaskScheme& scheme,
                            std::chrono::milliseconds timeout) {
  if (timeout.count() <= 0) return trainer(scheme);
  // The worker owns copies of everything it touches so that an abandoned
  // run cannot outlive its inputs.
  auto task = std::make_shared<std::packaged_task<AttentionRecord()>>(
      [trainer, scheme] { return trainer(scheme); });
  auto result = task->get_future();
  std::thread([task] { (*task)(); }).detach();
  if (result.wait_for(timeout) != std::future_status::ready) {
    throw SearchTimeout("trainer did not finish within " + std::to_string(timeout.count()) + " ms");
  }
  return result.get();
}

void check_table(const AlsTable& t, std::size_t layers, std::size_t heads, const char* what) {
  if (t.size() != layers) throw DimensionError(std::string(what) + ": ALS table has wrong layer count");
  for (const auto& row : t)
    if (row.size() != heads) throw DimensionError(std::string(what) + ": ALS table has wrong head count");
}

nlohmann::json table_json(const AlsTable& t) { return t; }

}  // namespace

void SearchConfig::validate() const {
  if (!(low_threshold > 0.0 && low_threshold < high_threshold && high_threshold < 1.0)) {
    throw ConfigError("search thresholds must satisfy 0 < low < high < 1 (got low=" +
                      std::to_string(low_threshold) + ", high=" + std::to_string(high_threshold) + ")");
  }
  if (window < 1 || window % 2 == 0) throw ConfigError("search window must be odd and positive");
  if (probe_samples == 0) throw ConfigError("search probe_samples must be positive");
  if (trainer_timeout.count() < 0) throw ConfigError("search trainer_timeout must not be negative");
}

nlohmann::json to_json(const SearchConfig& c) {
  return {{"high_threshold", c.high_threshold}, {"low_threshold", c.low_threshold},
          {"probe_epochs", c.probe_epochs},     {"r", c.window},
          {"seed", c.seed},                     {"trainer_timeout_ms", c.trainer_timeout.count()},
          {"probe_samples", c.probe_samples}};
}

SearchConfig search_config_from_json(const nlohmann::json& doc, SearchConfig c) {
  if (!doc.is_object()) throw ConfigError("search config must be an object");
  try {
    c.high_threshold = doc.value("high_threshold", c.high_threshold);
    c.low_threshold = doc.value("low_threshold", c.low_threshold);
    c.probe_epochs = doc.value("probe_epochs", c.probe_epochs);
    c.window = doc.value("r", c.window);
    c.seed = doc.value("seed", c.seed);
    c.trainer_timeout = std::chrono::milliseconds(
        doc.value("trainer_timeout_ms", static_cast<long long>(c.trainer_timeout.count())));
    c.probe_samples = doc.value("probe_samples", c.probe_samples);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("search config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string to_string(LayerAction a) {
  switch (a) {
    case LayerAction::mask_all: return "mask_all";
    case LayerAction::keep_single: return "keep_single";
    case LayerAction::remove: return "remove";
  }
  return "remove";
}

LayerAction layer_action_from_string(const std::string& s) {
  if (s == "mask_all") return LayerAction::mask_all;
  if (s == "keep_single") return LayerAction::keep_single;
  if (s == "remove") return LayerAction::remove;
  throw ConfigError("unknown layer action '" + s + "'");
}

LayerAction assign_action(double als0, const SearchConfig& cfg) {
  if (als0 > cfg.high_threshold) return LayerAction::mask_all;
  if (als0 < cfg.low_threshold) return LayerAction::remove;
  return LayerAction::keep_single;
}

MaskScheme initial_scheme(std::size_t layers, std::size_t heads, std::size_t window) {
  MaskScheme s = MaskScheme::unmasked(layers, heads);
  for (auto& layer : s.layers) layer[0] = hard(window);
  return s;
}

MaskScheme assign_masks(const std::vector<LayerAction>& actions, std::size_t heads, std::size_t window) {
  MaskScheme s = MaskScheme::unmasked(actions.size(), heads);
  for (std::size_t l = 0; l < actions.size(); ++l) {
    switch (actions[l]) {
      case LayerAction::mask_all:
        for (auto& h : s.layers[l]) h = hard(window);
        break;
      case LayerAction::keep_single: s.layers[l][0] = hard(window); break;
      case LayerAction::remove: break;
    }
  }
  return s;
}

MaskScheme calibrate(const MaskScheme& step2, const std::vector<LayerAction>& actions,
                     const AlsTable& als, const SearchConfig& cfg) {
  check_table(als, step2.num_layers(), step2.num_heads(), "calibrate");
  if (actions.size() != step2.num_layers()) throw DimensionError("calibrate: one action per layer expected");
  MaskScheme out = step2;
  for (std::size_t l = 0; l < actions.size(); ++l) {
    if (actions[l] != LayerAction::mask_all) continue;
    for (std::size_t h = 0; h < out.layers[l].size(); ++h)
      if (als[l][h] < cfg.low_threshold) out.layers[l][h] = HeadMaskSpec{};
  }
  return out;
}

SearchDecision decide(const AlsTable& initial, const AlsTable& retrained, const SearchConfig& cfg,
                      std::size_t heads) {
  cfg.validate();
  const std::size_t layers = initial.size();
  check_table(initial, layers, heads, "decide");
  SearchDecision d;
  d.actions.reserve(layers);
  for (const auto& row : initial) d.actions.push_back(assign_action(row[0], cfg));
  d.step2 = assign_masks(d.actions, heads, cfg.window);
  d.final_scheme = d.step2;
  const bool any_all =
      std::find(d.actions.begin(), d.actions.end(), LayerAction::mask_all) != d.actions.end();
  if (any_all) {
    d.final_scheme = calibrate(d.step2, d.actions, retrained, cfg);
    for (std::size_t l = 0; l < layers; ++l)
      for (std::size_t h = 0; h < heads; ++h)
        if (d.step2.layers[l][h] != d.final_scheme.layers[l][h]) d.removed.emplace_back(l, h);
  }
  return d;
}

nlohmann::json to_json(const SearchTrace& t) {
  nlohmann::json iters = nlohmann::json::array();
  for (const auto& it : t.iterations)
    iters.push_back({{"stage", it.stage}, {"scheme", to_json(it.scheme)}, {"als", table_json(it.als)}});
  nlohmann::json actions = nlohmann::json::array();
  for (auto a : t.actions) actions.push_back(to_string(a));
  nlohmann::json removed = nlohmann::json::array();
  for (auto [l, h] : t.removed) removed.push_back({{"layer", l}, {"head", h}});
  return {{"format", kTraceFormat},
          {"version", 1},
          {"config", to_json(t.config)},
          {"layers", t.layers},
          {"heads", t.heads},
          {"trainer_calls", t.trainer_calls()},
          {"iterations", iters},
          {"actions", actions},
          {"removed", removed},
          {"final_scheme", to_json(t.final_scheme)}};
}

SearchTrace search_trace_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format").get<std::string>() != kTraceFormat) throw ConfigError("not a search trace");
    if (doc.at("version").get<int>() != 1) throw ConfigError("unsupported search trace version");
    SearchTrace t;
    t.config = search_config_from_json(doc.at("config"));
    t.layers = doc.at("layers").get<std::size_t>();
    t.heads = doc.at("heads").get<std::size_t>();
    for (const auto& it : doc.at("iterations")) {
      t.iterations.push_back({it.at("stage").get<std::string>(), scheme_from_json(it.at("scheme")),
                              it.at("als").get<AlsTable>()});
    }
    for (const auto& a : doc.at("actions")) t.actions.push_back(layer_action_from_string(a.get<std::string>()));
    for (const auto& r : doc.at("removed"))
      t.removed.emplace_back(r.at("layer").get<std::size_t>(), r.at("head").get<std::size_t>());
    t.final_scheme = scheme_from_json(doc.at("final_scheme"));
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("search trace: ") + e.what());
  }
}

void save_trace(const SearchTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(trace).dump(2) << '\n';
}

SearchTrace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return search_trace_from_json(doc);
}

MaskScheme replay(const SearchTrace& trace) {
  if (trace.iterations.size() < 2) throw ContractError("replay: trace holds fewer than two iterations");
  return decide(trace.iterations[0].als, trace.iterations[1].als, trace.config, trace.heads).final_scheme;
}

SearchResult quick_search(const Trainer& trainer, const SearchConfig& cfg, std::size_t layers,
                          std::size_t heads) {
  cfg.validate();
  if (layers == 0 || heads == 0) throw ConfigError("quick_search: layers and heads must be positive");
  SearchTrace trace;
  trace.config = cfg;
  trace.layers = layers;
  trace.heads = heads;

  auto measure = [&](const char* stage, const MaskScheme& scheme) -> const AlsTable& {
    const AttentionRecord rec = run_trainer(trainer, scheme, cfg.trainer_timeout);
    AlsTable t = als_table(rec, cfg.window);
    check_table(t, layers, heads, "quick_search");
    trace.iterations.push_back({stage, scheme, std::move(t)});
    return trace.iterations.back().als;
  };

  const AlsTable initial = measure("initialization", initial_scheme(layers, heads, cfg.window));
  std::vector<LayerAction> actions;
  for (const auto& row : initial) actions.push_back(assign_action(row[0], cfg));
  const MaskScheme step2 = assign_masks(actions, heads, cfg.window);
  const AlsTable retrained = measure("assignment", step2);

  const SearchDecision d = decide(initial, retrained, cfg, heads);
  trace.actions = d.actions;
  trace.removed = d.removed;
  trace.final_scheme = d.final_scheme;
  if (!d.removed.empty()) measure("calibration", d.final_scheme);
  return {d.final_scheme, std::move(trace)};
}

Trainer make_probe_trainer(const ModelConfig& base, const TrainConfig& tc, const Dataset& train_set,
                           const Dataset& val_set, const SearchConfig& cfg) {
  TrainConfig probe = tc;
  probe.epochs = cfg.probe_epochs;
  probe.probe_samples = cfg.probe_samples;
  probe.als_window = cfg.window;
  return [base, probe, train_set, val_set, seed = cfg.seed](const MaskScheme& scheme) {
    ModelConfig mc = base;
    mc.scheme = scheme;
    if (val_set.size() == 0) throw ContractError("probe trainer: empty validation set");
    TrainResult r = train(mc, probe, train_set, val_set, seed);
    return r.probe;
  };
}

SoftMaskResult train_soft_masks(Model model, const TrainConfig& tc, const Dataset& train_set,
                                const Dataset& val_set, std::uint64_t seed, const EpochCallback& on_epoch) {
  if (!model.config().scheme.has_kind(MaskKind::soft)) {
    throw ContractError("train_soft_masks: scheme has no soft head");
  }
  SoftMaskResult out{train(std::move(model), tc, train_set, val_set, seed, on_epoch), {}};
  out.alphas = out.train.model.soft_alphas();
  return out;
}

}  // namespace mait
