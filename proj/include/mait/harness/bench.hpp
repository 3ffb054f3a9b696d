// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mait/maskgen/mask.hpp"

namespace mait {

enum class BenchKernel { standard, dense_masked, sparse };

std::string to_string(BenchKernel k);
BenchKernel bench_kernel_from_string(const std::string& s);

struct BenchReport {
  std::string kernel;
  std::size_t n = 0, d = 0, r = 0;
  std::size_t repeats = 0, warmups = 0, workers = 1;
  std::vector<double> times_s;  // post-warmup repeats only
  double median_s = 0.0;
  std::uint64_t score_dots = 0;        // per kernel call
  std::uint64_t score_multiplies = 0;  // per kernel call
};

/// Most-square rows×cols factorization of n patches.
PatchGrid grid_for(std::size_t n);

/// Times one kernel on pre-generated N+1 token inputs of width d (a single
/// head of width d). Only the kernel call is inside the timed region.
BenchReport bench_attention(std::size_t n, std::size_t d, std::size_t r, BenchKernel kernel,
                            std::size_t repeats, std::size_t warmups, std::size_t workers = 1,
                            std::uint64_t seed = 0);

nlohmann::json to_json(const BenchReport& report);

}  // namespace mait
