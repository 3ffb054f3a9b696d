// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>

#include "mait/model/model.hpp"

namespace mait {

inline constexpr std::uint32_t kCheckpointVersion = 1;
/// Magic, version and header length.
inline constexpr std::size_t kCheckpointPreamble = 12;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class CheckpointMagicError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointFormatError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

/// Layout: "MAIT", u32 version, u32 header length, JSON header holding the
/// config and the tensor manifest (name, shape, byte offset from the start
/// of the data section), then little-endian f32 arrays in manifest order.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace mait
