// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>

#include "varleak/data/dataset.hpp"

namespace varleak::data {

struct IngestOptions {
  std::size_t side = 64;
  std::size_t channels = 3;
  /// Alphabet sizes; 0 means one past the largest label seen (at least 2).
  std::size_t u_classes = 0;
  std::size_t s_classes = 0;
};

/// Reads a CSV label table with header `path,u,s`. Relative image paths are
/// resolved against the table's directory. Every image is decoded, converted
/// to RGB (or gray) and resized to side x side with area interpolation.
LabeledDataset ingest_image_table(const std::filesystem::path& csv, const IngestOptions& options = {});

}  // namespace varleak::data
