// SPDX-License-Identifier: Apache-2.0
// Acceptance checks. Prints one PASS/FAIL line per criterion; exits
// non-zero if any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mait/attention/attention.hpp"
#include "mait/harness/bench.hpp"
#include "mait/harness/dataset.hpp"
#include "mait/harness/train.hpp"
#include "mait/maskgen/mask.hpp"
#include "mait/metrics/cost_model.hpp"
#include "mait/metrics/locality.hpp"
#include "mait/model/model.hpp"
#include "mait/numerics/grad_check.hpp"
#include "mait/numerics/rng.hpp"
#include "mait/search/search.hpp"

using namespace mait;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(const char* f, double v) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Outcome cost_model() {
  Outcome o;
  Rng rng(1);
  std::size_t bad = 0;
  for (int i = 0; i < 1000; ++i) {
    const CostQuery q{1 + rng.below(10000), 1 + rng.below(1024), 2 * rng.below(6) + 1, 1 + rng.below(16)};
    bad += attn_map_flops(q, AttnMethod::mha) != 2 * q.n * q.n * q.d;
    bad += attn_map_flops(q, AttnMethod::w_mha) != 2 * q.window * q.window * q.n * q.d;
    bad += attn_map_flops(q, AttnMethod::m_mha) != 2 * q.r * q.r * q.n * q.d;
  }
  o.require(bad == 0, std::to_string(bad) + " formula mismatches");

  const CostQuery s1{3136, 96, 3, 7}, s2{784, 192, 3, 7};
  const Ratio ratio = Ratio::of(attn_map_flops(s1, AttnMethod::m_mha), attn_map_flops(s1, AttnMethod::mha));
  o.require(ratio == Ratio{9, 3136}, "masked/unmasked ratio is not 9/3136");
  const std::vector<CostQuery> stages{s1, s2};
  const ReductionReport rep = reduction_report(stages);
  o.require(rep.stages[0].attn_map_reduction == Ratio{3127, 3136}, "stage 1 reduction is not 3127/3136");
  o.require(rep.stages[1].attn_map_reduction == Ratio{775, 784}, "stage 2 reduction is not 775/784");
  o.note("ratio " + std::to_string(ratio.num) + "/" + std::to_string(ratio.den) + " = " +
         fmt("%.3f%%", ratio.percent()) + ", stage reductions " +
         fmt("%.3f%%", rep.stages[0].attn_map_reduction.percent()) + " and " +
         fmt("%.3f%%", rep.stages[1].attn_map_reduction.percent()));
  return o;
}

// ---------------------------------------------------------------------------

Outcome kernel_equivalence() {
  Outcome o;
  Rng rng(2);
  double sparse_err = 0.0, ones_err = 0.0, soft_hi = 0.0, soft_lo = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    // Grids up to 32×34 keep N ≤ 1088.
    const PatchGrid grid{1 + rng.below(32), 1 + rng.below(34)};
    const std::size_t r = rng.below(2) ? 3 : 5, t = grid.tokens(), d = 1 + rng.below(32);
    const double scale = 0.5 + 2.5 * rng.uniform();
    const Tensor q = rng.normal_tensor({t, d}, scale), k = rng.normal_tensor({t, d}, scale),
                 v = rng.normal_tensor({t, d});
    const AttentionMask hard = build_mask(grid, MaskKind::hard, r);
    sparse_err = std::max(sparse_err, max_abs_diff(masked_attention_dense(q, k, v, hard).values,
                                                   masked_attention_sparse(q, k, v, hard).values));
    if (trial % 4 == 0) {
      const Tensor plain = attention(q, k, v).values;
      ones_err = std::max(ones_err, max_abs_diff(masked_attention_dense(q, k, v, Tensor({t, t}, 1.0)).values, plain));
      AttentionMask soft = build_mask(grid, MaskKind::soft, r);
      soft.set_theta(40.0);
      soft_hi = std::max(soft_hi, max_abs_diff(masked_attention_dense(q, k, v, soft).values, plain));
      soft.set_theta(-40.0);
      soft_lo = std::max(soft_lo, max_abs_diff(masked_attention_dense(q, k, v, soft).values,
                                               masked_attention_dense(q, k, v, hard).values));
    }
  }
  o.require(sparse_err <= 1e-9, "sparse vs dense " + fmt("%.3g", sparse_err));
  o.require(ones_err <= 1e-12, "all-ones vs unmasked " + fmt("%.3g", ones_err));
  o.require(soft_hi <= 1e-9, "alpha=1 vs unmasked " + fmt("%.3g", soft_hi));
  o.require(soft_lo <= 1e-9, "theta=-40 vs hard " + fmt("%.3g", soft_lo));
  if (o.pass)
    o.note("max errors: sparse " + fmt("%.2g", sparse_err) + ", all-ones " + fmt("%.2g", ones_err) +
           ", alpha=1 " + fmt("%.2g", soft_hi) + ", theta=-40 " + fmt("%.2g", soft_lo));
  return o;
}

// ---------------------------------------------------------------------------

Outcome gradients() {
  Outcome o;
  double worst_qkv = 0.0, worst_theta = 0.0, worst_model = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(300 + seed);
    const PatchGrid grid{2 + rng.below(3), 2 + rng.below(3)};
    const std::size_t t = grid.tokens(), d = 2 + rng.below(3);
    const Tensor q = rng.normal_tensor({t, d}), k = rng.normal_tensor({t, d}), v = rng.normal_tensor({t, d});
    const Tensor probe = rng.normal_tensor({t, d});
    const Tensor hard = build_mask(grid, MaskKind::hard, 3).binary_matrix();
    auto readout = [&](const Var& out) { return sum(mul(out, Var::constant(probe))); };
    const Var cq = Var::constant(q), ck = Var::constant(k), cv = Var::constant(v);
    worst_qkv = std::max({worst_qkv,
                          grad_check([&](const Var& x) { return readout(masked_attention(x, ck, cv, &hard)); }, q),
                          grad_check([&](const Var& x) { return readout(masked_attention(cq, x, cv, &hard)); }, k),
                          grad_check([&](const Var& x) { return readout(masked_attention(cq, ck, x, &hard)); }, v)});
    const Tensor theta = Tensor::scalar(rng.uniform(-3.0, 3.0));
    worst_theta = std::max(worst_theta, grad_check([&](const Var& th) {
                             return readout(masked_attention(cq, ck, cv, &hard, th));
                           }, theta));

    ModelConfig mc;
    mc.layers = 3;
    mc.heads = 2;
    mc.dim = 8;
    mc.grid = {3, 3};
    mc.patch_px = 2;
    mc.layerscale_eps = 0.5;
    mc.scheme = MaskScheme::unmasked(3, 2);
    mc.scheme.layers[0][0] = HeadMaskSpec{MaskKind::hard, 3, 0, 0};
    mc.scheme.layers[1][1] = HeadMaskSpec{MaskKind::soft, 3, 0, 0};
    Model m = Model::init(mc, seed);
    for (auto& p : m.params().tensors)
      for (double& x : p.storage()) x += 0.2 * rng.normal();
    const Tensor img = rng.uniform_tensor({6, 6, 1}, 0.0, 1.0);
    const std::size_t label = rng.below(2);
    for (int pick = 0; pick < 4; ++pick) {
      const std::size_t slot = rng.below(m.layout().specs.size());
      auto f = [&](const Var& x) {
        auto p = param_vars(m.params(), false);
        p[slot] = x;
        return cross_entropy(logits(m, p, img), std::span<const std::size_t>(&label, 1));
      };
      const std::vector<std::size_t> coords{rng.below(m.params().tensors[slot].numel())};
      worst_model = std::max(worst_model, grad_check(f, m.params().tensors[slot], coords));
    }
  }
  o.require(worst_qkv < 1e-4, "Q/K/V " + fmt("%.3g", worst_qkv));
  o.require(worst_theta < 1e-4, "theta " + fmt("%.3g", worst_theta));
  o.require(worst_model < 1e-4, "model loss " + fmt("%.3g", worst_model));
  if (o.pass)
    o.note("worst relative errors over 20 seeds: Q/K/V " + fmt("%.2g", worst_qkv) + ", theta " +
           fmt("%.2g", worst_theta) + ", model " + fmt("%.2g", worst_model));
  return o;
}

// ---------------------------------------------------------------------------

Outcome complexity() {
  Outcome o;
  auto count = [](std::size_t n, BenchKernel k) {
    return static_cast<double>(bench_attention(n, 4, 3, k, 3, 1).score_multiplies);
  };
  const double sparse = count(1024, BenchKernel::sparse) / count(256, BenchKernel::sparse);
  const double dense = count(1024, BenchKernel::dense_masked) / count(256, BenchKernel::dense_masked);
  o.require(sparse >= 3.8 && sparse <= 4.6, "sparse count ratio " + fmt("%.3f", sparse));
  o.require(dense >= 14.5 && dense <= 17.5, "dense count ratio " + fmt("%.3f", dense));
  const BenchReport s = bench_attention(3136, 96, 3, BenchKernel::sparse, 5, 1);
  const BenchReport d = bench_attention(3136, 96, 3, BenchKernel::dense_masked, 5, 1);
  const double time_ratio = s.median_s / d.median_s;
  o.require(time_ratio <= 0.25, "sparse/dense wall time " + fmt("%.3f", time_ratio));
  if (o.pass)
    o.note("count ratios 256->1024: sparse " + fmt("%.3f", sparse) + ", dense " + fmt("%.3f", dense) +
           "; wall time at N=3136 D=96: sparse " + fmt("%.4f s", s.median_s) + ", dense " +
           fmt("%.4f s", d.median_s) + " (" + fmt("%.3fx", time_ratio) + ")");
  return o;
}

// ---------------------------------------------------------------------------

Outcome training() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  ModelConfig mc;  // L=4, H=4, D=64, 8×8 grid
  const Dataset tr = gen_local_task(mc.grid, mc.patch_px, 1536, 5);
  const Dataset va = gen_local_task(mc.grid, mc.patch_px, 512, 6);
  TrainConfig tc = TrainConfig::toy();
  tc.probe_samples = 16;
  auto best_run = [&](const MaskScheme& scheme, const char* name) {
    mc.scheme = scheme;
    double last = 0.0;
    train(mc, tc, tr, va, 1, [&](const EpochMetrics& m) {
      last = m.val_acc;
      std::printf("  %s epoch %2zu val_acc %.3f\n", name, m.epoch, m.val_acc);
      std::fflush(stdout);
    });
    return last;
  };
  const double sch1 = best_run(make_scheme(SchemePreset::sch1, 4, 4, 3), "sch1");
  const double none = best_run(MaskScheme::unmasked(4, 4), "none");
  const double elapsed = seconds_since(t0);
  o.require(sch1 >= 0.90, "sch1 final val_acc " + fmt("%.3f", sch1) + " < 0.90");
  o.require(none >= 0.80, "all-none final val_acc " + fmt("%.3f", none) + " < 0.80");
  o.require(elapsed < 900.0, "runtime " + fmt("%.0f s", elapsed));
  if (o.pass)
    o.note("final val_acc: sch1 " + fmt("%.3f", sch1) + ", all-none " + fmt("%.3f", none) + " (" +
           fmt("%.0f s", elapsed) + ")");
  return o;
}

// ---------------------------------------------------------------------------

MaskScheme straight_line(const AlsTable& first, const AlsTable& second, const SearchConfig& c) {
  MaskScheme s = MaskScheme::unmasked(first.size(), first[0].size());
  for (std::size_t l = 0; l < first.size(); ++l) {
    if (first[l][0] > c.high_threshold) {
      for (std::size_t h = 0; h < first[l].size(); ++h)
        if (second[l][h] >= c.low_threshold) s.layers[l][h] = HeadMaskSpec{MaskKind::hard, c.window, 0, 0};
    } else if (first[l][0] >= c.low_threshold) {
      s.layers[l][0] = HeadMaskSpec{MaskKind::hard, c.window, 0, 0};
    }
  }
  return s;
}

Outcome search() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(6);
  std::size_t mismatches = 0;
  const SearchConfig sc;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t layers = 1 + rng.below(24), heads = 1 + rng.below(8);
    auto draw = [&] {
      AlsTable t(layers, std::vector<double>(heads));
      for (auto& row : t)
        for (double& v : row)
          v = rng.below(10) == 0 ? (rng.below(2) ? sc.low_threshold : sc.high_threshold) : rng.uniform();
      return t;
    };
    const AlsTable a = draw(), b = draw();
    mismatches += decide(a, b, sc, heads).final_scheme != straight_line(a, b, sc);
  }
  o.require(mismatches == 0, std::to_string(mismatches) + " of 10000 tables disagree");

  ModelConfig mc;
  const Dataset tr = gen_local_task(mc.grid, mc.patch_px, 1024, 7);
  const Dataset va = gen_local_task(mc.grid, mc.patch_px, 256, 8);
  SearchConfig cfg;
  cfg.probe_samples = 256;
  std::size_t calls = 0;
  const Trainer probe = make_probe_trainer(mc, TrainConfig::toy(), tr, va, cfg);
  const SearchResult res = quick_search([&](const MaskScheme& s) {
    ++calls;
    return probe(s);
  }, cfg, mc.layers, mc.heads);
  const auto path = std::filesystem::temp_directory_path() / "mait_acceptance_trace.json";
  save_trace(res.trace, path);
  const SearchTrace back = load_trace(path);
  const double elapsed = seconds_since(t0);
  o.require(calls <= 3, std::to_string(calls) + " trainer calls");
  o.require(replay(back) == res.scheme && back.final_scheme == res.scheme, "trace does not replay");
  o.require(elapsed < 1200.0, "runtime " + fmt("%.0f s", elapsed));
  if (o.pass) {
    std::string actions;
    for (auto a : res.trace.actions) actions += (actions.empty() ? "" : ",") + to_string(a);
    o.note("10000/10000 tables match; toy search took " + std::to_string(calls) + " trainer calls [" + actions +
           "], trace replays (" + fmt("%.0f s", elapsed) + ")");
  }
  return o;
}

// ---------------------------------------------------------------------------

Tensor random_stochastic(Rng& rng, std::size_t t) {
  Tensor m({t, t});
  for (std::size_t i = 0; i < t; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < t; ++j) s += (m(i, j) = rng.below(4) == 0 ? 0.0 : -std::log(1.0 - rng.uniform()));
    if (s == 0.0) m(i, i) = s = 1.0;
    for (std::size_t j = 0; j < t; ++j) m(i, j) /= s;
  }
  return m;
}

Outcome metric_identities() {
  Outcome o;
  Rng rng(7);
  std::size_t als_bad = 0;
  for (int i = 0; i < 1000; ++i) {
    const PatchGrid g{1 + rng.below(10), 1 + rng.below(10)};
    const AttentionMask mask = build_mask(g, MaskKind::hard, rng.below(2) ? 3 : 5);
    const double a = als(random_stochastic(rng, g.tokens()), mask);
    als_bad += !(a >= 0.0 && a <= 1.0);
  }
  o.require(als_bad == 0, std::to_string(als_bad) + " ALS values outside [0,1]");

  double sym = 0.0, diag = 0.0;
  for (int rec = 0; rec < 20; ++rec) {
    AttentionRecord r;
    r.grid = {2 + rng.below(5), 2 + rng.below(5)};
    const std::size_t layers = 2 + rng.below(5), heads = 1 + rng.below(3);
    r.scheme = MaskScheme::unmasked(layers, heads);
    r.maps.assign(layers, {});
    for (auto& layer : r.maps)
      for (std::size_t h = 0; h < heads; ++h) layer.push_back(random_stochastic(rng, r.grid.tokens()));
    const Tensor s = cross_layer_similarity(r, rng.below(heads));
    for (std::size_t i = 0; i < layers; ++i) {
      diag = std::max(diag, std::abs(s(i, i) - 1.0));
      for (std::size_t j = 0; j < layers; ++j) sym = std::max(sym, std::abs(s(i, j) - s(j, i)));
    }
  }
  o.require(sym == 0.0, "similarity asymmetry " + fmt("%.3g", sym));
  o.require(diag <= 1e-12, "similarity diagonal off by " + fmt("%.3g", diag));

  std::size_t support_bad = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const PatchGrid g{3 + seed % 12, 4 + seed % 9};
    const AttentionMask m = build_random_mask(g, 9, seed);
    const Tensor b = m.binary_matrix();
    for (std::size_t i = 1; i < g.tokens(); ++i) {
      std::size_t kept = 0;
      for (std::size_t j = 1; j < g.tokens(); ++j) kept += b(i, j) == 1.0;
      support_bad += kept != 9 || b(i, 0) != 1.0 || b(i, i) != 1.0;
    }
  }
  o.require(support_bad == 0, std::to_string(support_bad) + " random-mask rows without exactly 9 patch columns");
  if (o.pass)
    o.note("1000 ALS values in [0,1]; similarity symmetric with unit diagonal (max diag error " +
           fmt("%.1g", diag) + "); random masks keep exactly 9 patches per row");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> selected;
  app.add_option("--criterion", selected, "Criterion number(s) 1-7; all when omitted")->check(CLI::Range(1, 7));
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7};

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"cost-model exactness", cost_model},  {"kernel equivalence", kernel_equivalence},
      {"gradient suite", gradients},         {"complexity witness", complexity},
      {"desk-scale training", training},     {"search procedure fidelity", search},
      {"metric identities", metric_identities}};

  bool all = true;
  for (int n : selected) {
    const auto& [name, run] = criteria[static_cast<std::size_t>(n - 1)];
    Outcome out;
    try {
      out = run();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    std::printf("criterion %d (%s): %s - %s\n", n, name, out.pass ? "PASS" : "FAIL", out.detail.c_str());
    std::fflush(stdout);
    all &= out.pass;
  }
  return all ? 0 : 1;
}
