// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "mait/maskgen/mask.hpp"
#include "mait/metrics/record.hpp"
#include "mait/numerics/tensor.hpp"

namespace mait {

/// Attention Locality Score of one map: for each patch row, the attention
/// mass on its kept patch columns; averaged over the N patch rows. The
/// class row and the class column are excluded. An unmasked mask keeps
/// every patch column.
double als(const Tensor& map, const AttentionMask& mask);

/// ALS of every layer/head of a record, measured against the R×R window
/// neighborhood regardless of how each head was masked. Indexed [layer][head].
using AlsTable = std::vector<std::vector<double>>;
AlsTable als_table(const AttentionRecord& record, std::size_t window);

/// L×L matrix of token-averaged cosine similarity between the head-h maps
/// of every pair of layers.
Tensor cross_layer_similarity(const AttentionRecord& record, std::size_t head);

/// CSV with header `layer,head,als`.
void write_als_csv(const AlsTable& table, const std::filesystem::path& path);
/// CSV with header `i,j,head,similarity`.
void write_similarity_csv(const Tensor& sim, std::size_t head, const std::filesystem::path& path);

}  // namespace mait
