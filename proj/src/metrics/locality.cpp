// SPDX-License-Identifier: Apache-2.0
#include "mait/metrics/locality.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "mait/numerics/errors.hpp"

namespace mait {

double als(const Tensor& map, const AttentionMask& mask) {
  const std::size_t t = mask.tokens();
  if (map.rank() != 2 || map.rows() != t || map.cols() != t) {
    throw DimensionError("als: map " + shape_string(map.shape()) + " for a mask over " +
                         std::to_string(t) + " tokens");
  }
  const std::size_t n = t - 1;
  double total = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const auto row = map.row(p + 1);
    double s = 0.0;
    if (mask.kind() == MaskKind::none) {
      for (std::size_t j = 1; j < t; ++j) s += row[j];
    } else {
      for (auto j : mask.neighbors(p)) s += row[j + 1];
    }
    total += s;
  }
  return total / static_cast<double>(n);
}

AlsTable als_table(const AttentionRecord& record, std::size_t window) {
  const AttentionMask probe = build_mask(record.grid, MaskKind::hard, window);
  AlsTable table(record.num_layers(), std::vector<double>(record.num_heads()));
  for (std::size_t l = 0; l < record.num_layers(); ++l)
    for (std::size_t h = 0; h < record.num_heads(); ++h) table[l][h] = als(record.map(l, h), probe);
  return table;
}

Tensor cross_layer_similarity(const AttentionRecord& record, std::size_t head) {
  const std::size_t layers = record.num_layers();
  if (layers == 0) throw ContractError("cross_layer_similarity: empty record");
  for (std::size_t l = 0; l < layers; ++l) {
    if (!record.has(l, head)) {
      throw ContractError("cross_layer_similarity: layer " + std::to_string(l) +
                          " has no capture for head " + std::to_string(head));
    }
  }
  const Tensor& first = record.map(0, head);
  const std::size_t t = first.rows(), width = first.cols();
  // Row norms once per layer.
  std::vector<std::vector<double>> norms(layers, std::vector<double>(t));
  for (std::size_t l = 0; l < layers; ++l) {
    const Tensor& m = record.map(l, head);
    if (m.shape() != first.shape()) throw DimensionError("cross_layer_similarity: map shape mismatch");
    for (std::size_t i = 0; i < t; ++i) {
      double s = 0.0;
      for (double v : m.row(i)) s += v * v;
      norms[l][i] = std::sqrt(s);
    }
  }
  Tensor sim({layers, layers});
  for (std::size_t a = 0; a < layers; ++a) {
    sim(a, a) = 1.0;
    for (std::size_t b = a + 1; b < layers; ++b) {
      const Tensor& ma = record.map(a, head);
      const Tensor& mb = record.map(b, head);
      double acc = 0.0;
      for (std::size_t i = 0; i < t; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < width; ++j) dot += ma(i, j) * mb(i, j);
        acc += dot / (norms[a][i] * norms[b][i]);
      }
      sim(a, b) = sim(b, a) = acc / static_cast<double>(t);
    }
  }
  return sim;
}

void write_als_csv(const AlsTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "layer,head,als\n" << std::setprecision(17);
  for (std::size_t l = 0; l < table.size(); ++l)
    for (std::size_t h = 0; h < table[l].size(); ++h) out << l << ',' << h << ',' << table[l][h] << '\n';
}

void write_similarity_csv(const Tensor& sim, std::size_t head, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "i,j,head,similarity\n" << std::setprecision(17);
  for (std::size_t i = 0; i < sim.rows(); ++i)
    for (std::size_t j = 0; j < sim.cols(); ++j) out << i << ',' << j << ',' << head << ',' << sim(i, j) << '\n';
}

}  // namespace mait
