// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "varleak/core/params.hpp"

namespace varleak::models {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointContents {
  nlohmann::json descriptor;
  std::map<std::string, core::Tensor> blobs;
};

/// VLMB container: magic, version, JSON architecture descriptor, then named
/// little-endian f64 blobs. Every parameter of each set is written under
/// "<prefix>.<parameter name>", including batch-norm running statistics.
void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& descriptor,
                      const std::vector<std::pair<std::string, const core::ParamSet*>>& sets);
CheckpointContents read_checkpoint(const std::filesystem::path& path);

/// Copies blobs into matching parameters; every parameter must be present
/// with the same shape, otherwise FormatError(kCorrupt).
void restore_params(const CheckpointContents& contents, const std::string& prefix, core::ParamSet& params);

}  // namespace varleak::models
