// SPDX-License-Identifier: Apache-2.0
#include "mait/metrics/record.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "mait/numerics/binary_io.hpp"
#include "mait/numerics/errors.hpp"

namespace mait {

namespace {
constexpr std::uint32_t kRecordVersion = 1;
}

bool AttentionRecord::has(std::size_t layer, std::size_t head) const {
  return layer < maps.size() && head < maps[layer].size() && maps[layer][head].numel() > 0;
}

const Tensor& AttentionRecord::map(std::size_t layer, std::size_t head) const {
  if (!has(layer, head)) {
    throw ContractError("attention record has no map for layer " + std::to_string(layer) +
                        ", head " + std::to_string(head));
  }
  return maps[layer][head];
}

void AttentionRecord::validate(double tol) const {
  const std::size_t t = grid.tokens();
  for (std::size_t l = 0; l < maps.size(); ++l) {
    for (std::size_t h = 0; h < maps[l].size(); ++h) {
      const Tensor& m = maps[l][h];
      if (m.rank() != 2 || m.rows() != t || m.cols() != t) {
        throw DimensionError("record map " + std::to_string(l) + "/" + std::to_string(h) +
                             " has shape " + shape_string(m.shape()));
      }
      for (std::size_t i = 0; i < t; ++i) {
        double s = 0.0;
        for (double v : m.row(i)) s += v;
        if (std::abs(s - 1.0) > tol) {
          throw ContractError("record map " + std::to_string(l) + "/" + std::to_string(h) +
                              " row " + std::to_string(i) + " sums to " + std::to_string(s));
        }
      }
    }
  }
}

AttentionRecord mean_record(std::span<const AttentionRecord> records) {
  if (records.empty()) throw ContractError("mean_record: no records");
  AttentionRecord out = records.front();
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.maps.size() != out.maps.size()) throw DimensionError("mean_record: layer mismatch");
    for (std::size_t l = 0; l < out.maps.size(); ++l) {
      if (rec.maps[l].size() != out.maps[l].size()) throw DimensionError("mean_record: head mismatch");
      for (std::size_t h = 0; h < out.maps[l].size(); ++h) {
        Tensor& acc = out.maps[l][h];
        const Tensor& m = rec.maps[l][h];
        if (m.shape() != acc.shape()) throw DimensionError("mean_record: map shape mismatch");
        for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += m[i];
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(records.size());
  for (auto& row : out.maps)
    for (auto& m : row)
      for (double& v : m.storage()) v *= inv;
  return out;
}

void save_record(const AttentionRecord& record, const std::filesystem::path& path) {
  const nlohmann::json header{{"grid", {record.grid.rows, record.grid.cols}},
                              {"layers", record.num_layers()},
                              {"heads", record.num_heads()},
                              {"tokens", record.grid.tokens()},
                              {"scheme", to_json(record.scheme)}};
  const std::string text = header.dump();
  binio::Writer w;
  w.bytes("MREC");
  w.u32(kRecordVersion);
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.bytes(text);
  const std::size_t t = record.grid.tokens();
  for (const auto& row : record.maps) {
    if (row.size() != record.num_heads()) throw DimensionError("save_record: ragged record");
    for (const auto& m : row) {
      if (m.numel() != t * t) throw DimensionError("save_record: incomplete map");
      for (double v : m.storage()) w.f64(v);
    }
  }
  binio::write_file(path.string(), w.buffer());
}

AttentionRecord load_record(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path.string());
  binio::Reader r(bytes);
  try {
    if (r.bytes(4) != "MREC") throw std::runtime_error(path.string() + ": not an attention record");
    if (r.u32() != kRecordVersion) throw std::runtime_error(path.string() + ": unsupported record version");
    const auto header = nlohmann::json::parse(r.bytes(r.u32()));
    AttentionRecord rec;
    rec.grid = {header.at("grid").at(0).get<std::size_t>(), header.at("grid").at(1).get<std::size_t>()};
    rec.scheme = scheme_from_json(header.at("scheme"));
    const auto layers = header.at("layers").get<std::size_t>();
    const auto heads = header.at("heads").get<std::size_t>();
    const std::size_t t = rec.grid.tokens();
    rec.maps.assign(layers, std::vector<Tensor>(heads));
    for (auto& row : rec.maps) {
      for (auto& m : row) {
        m = Tensor({t, t});
        for (double& v : m.storage()) v = r.f64();
      }
    }
    return rec;
  } catch (const binio::Truncated& e) {
    throw std::runtime_error(path.string() + ": truncated attention record (" + e.what() + ")");
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": malformed record header: " + e.what());
  }
}

}  // namespace mait
