// SPDX-License-Identifier: Apache-2.0
// Command-line front end: training, evaluation, attention analysis, mask
// search, cost model, kernel benchmark and dataset generation.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mait/harness/bench.hpp"
#include "mait/harness/dataset.hpp"
#include "mait/harness/run_config.hpp"
#include "mait/harness/train.hpp"
#include "mait/metrics/cost_model.hpp"
#include "mait/metrics/locality.hpp"
#include "mait/metrics/record.hpp"
#include "mait/model/checkpoint.hpp"
#include "mait/numerics/errors.hpp"
#include "mait/search/search.hpp"

namespace fs = std::filesystem;
using namespace mait;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  std::string out = ".";
};

RunConfig load(const Globals& g) { return g.config.empty() ? RunConfig{} : load_run_config(g.config); }

fs::path out_file(const Globals& g, const std::string& name) {
  fs::create_directories(g.out);
  return fs::path(g.out) / name;
}

void write_json(const fs::path& path, const nlohmann::json& doc) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

PatchGrid parse_grid(const std::string& s) {
  const auto x = s.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(s);
    return {std::stoul(s.substr(0, x)), std::stoul(s.substr(x + 1))};
  } catch (const std::exception&) {
    throw ConfigError("grid must look like 8x8, got '" + s + "'");
  }
}

void apply_scheme_override(RunConfig& rc, const std::string& preset, std::size_t r) {
  if (preset.empty()) return;
  rc.model = model_config_from_json([&] {
    nlohmann::json m = to_json(rc.model);
    m["scheme"] = preset;
    m["mask_r"] = r;
    return m;
  }());
}

std::string percent(const Ratio& r, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f%%", digits, r.percent());
  return buf;
}

AttentionRecord record_from(const std::string& checkpoint, const std::string& record, const RunConfig& rc,
                            std::uint64_t seed, std::size_t samples) {
  if (!record.empty()) return load_record(record);
  if (checkpoint.empty()) throw ConfigError("pass --checkpoint or --record");
  const Model model = load_checkpoint(checkpoint);
  const Splits s = make_splits(rc.data, model.config(), seed);
  return probe_record(model, s.val, samples, rc.train.workers);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked-attention transformer laboratory"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Run config (JSON with model/train/search/data sections)");
  app.add_option("--seed", g.seed, "Seed for data, initialization and training");
  app.add_option("--out", g.out, "Output directory");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoint, metrics and probe record");
  std::optional<std::size_t> epochs;
  std::string scheme_preset, train_data, val_data;
  std::size_t mask_r = 3;
  train_cmd->add_option("--epochs", epochs, "Override train.epochs");
  train_cmd->add_option("--scheme", scheme_preset, "Override the mask scheme: none, sch1, sch2, sch3");
  train_cmd->add_option("--r", mask_r, "Mask side used with --scheme");
  train_cmd->add_option("--train-data", train_data, "Training dataset file (default: generated)");
  train_cmd->add_option("--val-data", val_data, "Validation dataset file (default: generated)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string checkpoint, data_file;
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", data_file, "Dataset file (default: generated validation split)");

  // als
  auto* als_cmd = app.add_subcommand("als", "Attention locality score per layer and head");
  std::string record_file;
  std::size_t window = 3, samples = 64;
  als_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file");
  als_cmd->add_option("--record", record_file, "Saved attention record");
  als_cmd->add_option("--r", window, "Neighborhood side");
  als_cmd->add_option("--samples", samples, "Validation samples averaged when reading a checkpoint");

  // similarity
  auto* sim_cmd = app.add_subcommand("similarity", "Cross-layer attention similarity for one head");
  std::size_t head = 0;
  sim_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file");
  sim_cmd->add_option("--record", record_file, "Saved attention record");
  sim_cmd->add_option("--head", head, "Head index");
  sim_cmd->add_option("--samples", samples, "Validation samples averaged when reading a checkpoint");

  // search-masks
  auto* search_cmd = app.add_subcommand("search-masks", "Quick ALS-guided mask placement search");

  // flops
  auto* flops_cmd = app.add_subcommand("flops", "Attention-map and block cost model");
  std::uint64_t n = 3136, d = 96, win = 7, ffn = 4;
  std::uint64_t r = 3;
  flops_cmd->add_option("--n", n, "Patch tokens N");
  flops_cmd->add_option("--d", d, "Embedding width D");
  flops_cmd->add_option("--r", r, "Mask side R");
  flops_cmd->add_option("--window", win, "Shifted-window side M");
  flops_cmd->add_option("--ffn-ratio", ffn, "FFN expansion ratio");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Time one attention kernel");
  std::size_t bn = 3136, bd = 96, br = 3, repeats = 5, warmups = 1, workers = 1;
  std::string kernel = "sparse";
  bench_cmd->add_option("--n", bn, "Patch tokens N");
  bench_cmd->add_option("--d", bd, "Head width");
  bench_cmd->add_option("--r", br, "Mask side R");
  bench_cmd->add_option("--kernel", kernel, "standard, dense or sparse");
  bench_cmd->add_option("--repeats", repeats, "Timed repeats (>= 3)");
  bench_cmd->add_option("--warmups", warmups, "Warmup runs (>= 1)");
  bench_cmd->add_option("--workers", workers, "Worker threads");

  // gen-data
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset file");
  std::string grid_text = "8x8", task = "local", file_name = "data.mdat";
  std::size_t patch_px = 4, count = 1024, channels = 1;
  gen_cmd->add_option("--grid", grid_text, "Patch grid, e.g. 8x8");
  gen_cmd->add_option("--patch-px", patch_px, "Patch side in pixels");
  gen_cmd->add_option("--samples", count, "Number of samples");
  gen_cmd->add_option("--channels", channels, "Image channels");
  gen_cmd->add_option("--task", task, "local or global");
  gen_cmd->add_option("--file", file_name, "Output file name inside --out");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitConfig;
  }

  try {
    if (*train_cmd) {
      RunConfig rc = load(g);
      if (epochs) rc.train.epochs = *epochs;
      apply_scheme_override(rc, scheme_preset, mask_r);
      Splits s = make_splits(rc.data, rc.model, g.seed);
      if (!train_data.empty()) s.train = load_dataset(train_data);
      if (!val_data.empty()) s.val = load_dataset(val_data);
      const TrainResult res = train(rc.model, rc.train, s.train, s.val, g.seed, [](const EpochMetrics& m) {
        std::printf("epoch %zu train_loss %.4f train_acc %.4f val_loss %.4f val_acc %.4f\n", m.epoch,
                    m.train_loss, m.train_acc, m.val_loss, m.val_acc);
        std::fflush(stdout);
      });
      save_checkpoint(res.model, out_file(g, "checkpoint.mait"));
      write_metrics_csv(res.history, rc.model.layers, rc.model.heads, out_file(g, "metrics.csv"));
      if (!res.probe.maps.empty()) save_record(res.probe, out_file(g, "probe.mrec"));
      write_json(out_file(g, "config.json"), to_json(rc));
      std::printf("wrote %s\n", out_file(g, "checkpoint.mait").c_str());
    } else if (*eval_cmd) {
      const RunConfig rc = load(g);
      const Model model = load_checkpoint(checkpoint);
      const Dataset data =
          data_file.empty() ? make_splits(rc.data, model.config(), g.seed).val : load_dataset(data_file);
      data.validate(model.config().classes);
      const Evaluation ev = evaluate(model, data, rc.train.workers);
      const nlohmann::json doc{{"samples", data.size()}, {"loss", ev.loss}, {"accuracy", ev.accuracy}};
      write_json(out_file(g, "eval.json"), doc);
      std::cout << doc.dump() << '\n';
    } else if (*als_cmd) {
      const RunConfig rc = load(g);
      const AttentionRecord rec = record_from(checkpoint, record_file, rc, g.seed, samples);
      const AlsTable t = als_table(rec, window);
      write_als_csv(t, out_file(g, "als.csv"));
      for (std::size_t l = 0; l < t.size(); ++l) {
        std::printf("layer %zu:", l);
        for (double v : t[l]) std::printf(" %.4f", v);
        std::printf("\n");
      }
    } else if (*sim_cmd) {
      const RunConfig rc = load(g);
      const AttentionRecord rec = record_from(checkpoint, record_file, rc, g.seed, samples);
      const Tensor sim = cross_layer_similarity(rec, head);
      write_similarity_csv(sim, head, out_file(g, "similarity.csv"));
      for (std::size_t i = 0; i < sim.rows(); ++i) {
        for (std::size_t j = 0; j < sim.cols(); ++j) std::printf("%s%.4f", j ? " " : "", sim(i, j));
        std::printf("\n");
      }
    } else if (*search_cmd) {
      const RunConfig rc = load(g);
      SearchConfig sc = rc.search;
      sc.seed = g.seed;
      const Splits s = make_splits(rc.data, rc.model, g.seed);
      const Trainer trainer = make_probe_trainer(rc.model, rc.train, s.train, s.val, sc);
      const SearchResult res = quick_search(trainer, sc, rc.model.layers, rc.model.heads);
      save_trace(res.trace, out_file(g, "search_trace.json"));
      save_scheme(res.scheme, out_file(g, "scheme.json"));
      for (std::size_t l = 0; l < res.trace.actions.size(); ++l)
        std::printf("layer %zu: %s, %zu masked heads\n", l, to_string(res.trace.actions[l]).c_str(),
                    res.scheme.masked_heads(l));
      std::printf("trainer calls: %zu\n", res.trace.trainer_calls());
    } else if (*flops_cmd) {
      const CostQuery q{n, d, r, win};
      const std::uint64_t mha = attn_map_flops(q, AttnMethod::mha);
      const std::uint64_t wmha = attn_map_flops(q, AttnMethod::w_mha);
      const std::uint64_t mmha = attn_map_flops(q, AttnMethod::m_mha);
      const Ratio ratio = Ratio::of(mmha, mha);
      std::printf("MHA   2N^2D  = %llu\n", static_cast<unsigned long long>(mha));
      std::printf("W-MHA 2M^2ND = %llu\n", static_cast<unsigned long long>(wmha));
      std::printf("M-MHA 2R^2ND = %llu\n", static_cast<unsigned long long>(mmha));
      std::printf("M-MHA / MHA  = %llu/%llu = %s\n", static_cast<unsigned long long>(ratio.num),
                  static_cast<unsigned long long>(ratio.den), percent(ratio).c_str());
      if (r * r <= n) {
        const ReductionReport rep = reduction_report(std::span<const CostQuery>(&q, 1), ffn);
        const StageCost& st = rep.stages.front();
        std::printf("attention-map reduction = %s\n", percent(st.attn_map_reduction).c_str());
        std::printf("block attention share   = %s\n", percent(st.attn_share_dense, 2).c_str());
        std::printf("block reduction         = %s\n", percent(st.block_reduction, 2).c_str());
        std::printf("convention: %s\n", rep.convention.c_str());
      }
    } else if (*bench_cmd) {
      const BenchReport rep =
          bench_attention(bn, bd, br, bench_kernel_from_string(kernel), repeats, warmups, workers, g.seed);
      const nlohmann::json doc = to_json(rep);
      write_json(out_file(g, "bench_" + rep.kernel + ".json"), doc);
      std::cout << doc.dump() << '\n';
    } else if (*gen_cmd) {
      const PatchGrid grid = parse_grid(grid_text);
      const DataConfig dc{task, 0, 0};
      ModelConfig mc;
      mc.grid = grid;
      mc.patch_px = patch_px;
      mc.channels = channels;
      const Dataset data = generate(dc, mc, count, g.seed);
      const fs::path path = out_file(g, file_name);
      save_dataset(data, path);
      std::printf("wrote %zu samples to %s\n", data.size(), path.c_str());
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParameterError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
