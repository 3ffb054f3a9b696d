// SPDX-License-Identifier: Apache-2.0
#include "mait/model/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include "mait/numerics/binary_io.hpp"
#include "mait/numerics/errors.hpp"

namespace mait {

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const auto& specs = model.layout().specs;
  nlohmann::json manifest = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& s : specs) {
    manifest.push_back({{"name", s.name}, {"shape", s.shape}, {"offset", offset}});
    offset += 4 * shape_numel(s.shape);
  }
  const nlohmann::json header{{"config", to_json(model.config())}, {"tensors", std::move(manifest)}};
  const std::string text = header.dump();

  binio::Writer w;
  w.bytes("MAIT");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.bytes(text);
  for (const auto& t : model.params().tensors)
    for (double v : t.storage()) w.f32(static_cast<float>(v));
  binio::write_file(path.string(), w.buffer());
}

Model load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path.string());
  binio::Reader r(bytes);
  const std::string where = path.string() + ": ";
  try {
    if (r.bytes(4) != "MAIT") throw CheckpointMagicError(where + "bad magic, not a checkpoint");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
      throw CheckpointVersionError(where + "checkpoint version " + std::to_string(version) +
                                   ", expected " + std::to_string(kCheckpointVersion));
    }
    const std::uint32_t header_len = r.u32();
    nlohmann::json header;
    try {
      header = nlohmann::json::parse(r.bytes(header_len));
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointFormatError(where + "malformed header: " + e.what());
    }
    ModelConfig cfg;
    try {
      cfg = model_config_from_json(header.at("config"));
    } catch (const std::exception& e) {
      throw CheckpointFormatError(where + "bad config: " + e.what());
    }
    const ParamLayout layout = make_layout(cfg);
    const auto& manifest = header.at("tensors");
    if (manifest.size() != layout.specs.size()) {
      throw CheckpointFormatError(where + "manifest lists " + std::to_string(manifest.size()) +
                                  " tensors, config implies " + std::to_string(layout.specs.size()));
    }
    const std::size_t data_start = r.position();
    ModelParams params;
    std::uint64_t expected_offset = 0;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
      const auto& e = manifest[i];
      const auto& spec = layout.specs[i];
      if (e.at("name").get<std::string>() != spec.name || e.at("shape").get<Shape>() != spec.shape ||
          e.at("offset").get<std::uint64_t>() != expected_offset) {
        throw CheckpointFormatError(where + "manifest entry " + std::to_string(i) +
                                    " disagrees with the config layout (" + spec.name + ")");
      }
      if (r.position() - data_start != expected_offset) {
        throw CheckpointFormatError(where + "data offset mismatch at " + spec.name);
      }
      Tensor t(spec.shape);
      for (double& v : t.storage()) v = static_cast<double>(r.f32());
      expected_offset += 4 * t.numel();
      params.tensors.push_back(std::move(t));
    }
    if (r.remaining() != 0) throw CheckpointFormatError(where + "trailing bytes after tensor data");
    return Model(std::move(cfg), std::move(params));
  } catch (const binio::Truncated& e) {
    throw CheckpointTruncatedError(where + "truncated checkpoint (" + e.what() + ")");
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointFormatError(where + "malformed manifest: " + e.what());
  }
}

}  // namespace mait
