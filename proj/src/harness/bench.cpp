// SPDX-License-Identifier: Apache-2.0
#include "mait/harness/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "mait/attention/attention.hpp"
#include "mait/numerics/errors.hpp"
#include "mait/numerics/rng.hpp"

namespace mait {

std::string to_string(BenchKernel k) {
  switch (k) {
    case BenchKernel::standard: return "standard";
    case BenchKernel::dense_masked: return "dense";
    case BenchKernel::sparse: return "sparse";
  }
  return "standard";
}

BenchKernel bench_kernel_from_string(const std::string& s) {
  if (s == "standard") return BenchKernel::standard;
  if (s == "dense") return BenchKernel::dense_masked;
  if (s == "sparse") return BenchKernel::sparse;
  throw ConfigError("unknown kernel '" + s + "' (expected standard, dense or sparse)");
}

PatchGrid grid_for(std::size_t n) {
  if (n == 0) throw ParameterError("token count must be positive");
  std::size_t rows = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  while (rows > 1 && n % rows != 0) --rows;
  return {rows, n / rows};
}

BenchReport bench_attention(std::size_t n, std::size_t d, std::size_t r, BenchKernel kernel,
                            std::size_t repeats, std::size_t warmups, std::size_t workers,
                            std::uint64_t seed) {
  if (repeats < 3) throw ParameterError("bench needs at least 3 repeats");
  if (warmups < 1) throw ParameterError("bench needs at least 1 warmup");
  const PatchGrid grid = grid_for(n);
  const std::size_t t = grid.tokens();
  Rng rng(seed);
  const Tensor q = rng.normal_tensor({t, d});
  const Tensor k = rng.normal_tensor({t, d});
  const Tensor v = rng.normal_tensor({t, d});
  const AttentionMask mask = build_mask(grid, MaskKind::hard, r);
  // The dense-masked kernel receives its keep matrix pre-built.
  const Tensor keep = kernel == BenchKernel::dense_masked ? mask.binary_matrix() : Tensor{};

  BenchReport rep;
  rep.kernel = to_string(kernel);
  rep.n = n;
  rep.d = d;
  rep.r = r;
  rep.repeats = repeats;
  rep.warmups = warmups;
  rep.workers = workers;

  double sink = 0.0;
  for (std::size_t it = 0; it < warmups + repeats; ++it) {
    KernelCounters counters;
    KernelOptions opts{.capture = false, .counters = &counters, .workers = workers};
    const auto start = std::chrono::steady_clock::now();
    AttentionOutput out;
    switch (kernel) {
      case BenchKernel::standard: out = attention(q, k, v, opts); break;
      case BenchKernel::dense_masked: out = masked_attention_dense(q, k, v, keep, opts); break;
      case BenchKernel::sparse: out = masked_attention_sparse(q, k, v, mask, opts); break;
    }
    const auto stop = std::chrono::steady_clock::now();
    sink += out.values[0];
    if (it >= warmups) rep.times_s.push_back(std::chrono::duration<double>(stop - start).count());
    rep.score_dots = counters.score_dots;
    rep.score_multiplies = counters.score_multiplies;
  }
  if (!std::isfinite(sink)) throw std::runtime_error("bench: non-finite kernel output");
  std::vector<double> sorted = rep.times_s;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size();
  rep.median_s = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
  return rep;
}

nlohmann::json to_json(const BenchReport& r) {
  return {{"kernel", r.kernel},       {"n", r.n},
          {"d", r.d},                 {"r", r.r},
          {"repeats", r.repeats},     {"warmups", r.warmups},
          {"workers", r.workers},     {"times_s", r.times_s},
          {"median_s", r.median_s},   {"score_dots", r.score_dots},
          {"score_multiplies", r.score_multiplies}};
}

}  // namespace mait
