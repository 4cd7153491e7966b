// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "varleak/core/tensor.hpp"

namespace varleak::data {

enum class SplitTag : std::uint8_t { kAll, kTrain, kVal, kTest };
const char* split_name(SplitTag tag) noexcept;

/// Images stored as u8 in HWC order, one utility label and one sensitive
/// label per example.
struct LabeledDataset {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 0;
  std::uint32_t u_classes = 0;
  std::uint32_t s_classes = 0;
  std::vector<std::uint8_t> pixels;
  std::vector<std::uint8_t> u;
  std::vector<std::uint8_t> s;
  SplitTag split = SplitTag::kAll;

  [[nodiscard]] std::size_t size() const noexcept { return u.size(); }
  [[nodiscard]] std::size_t example_bytes() const noexcept {
    return static_cast<std::size_t>(height) * width * channels;
  }
  /// Per-example model input shape (C, H, W).
  [[nodiscard]] core::Shape input_shape() const { return {channels, height, width}; }

  /// Throws ConfigError when sizes disagree or labels fall outside the alphabets.
  void validate() const;

  /// Pixels of the selected examples scaled to [0, 1], shape (n, C, H, W).
  [[nodiscard]] core::Tensor features(std::span<const std::size_t> indices) const;
  [[nodiscard]] std::vector<std::size_t> u_labels(std::span<const std::size_t> indices) const;
  [[nodiscard]] std::vector<std::size_t> s_labels(std::span<const std::size_t> indices) const;

  /// Copy of the selected examples.
  [[nodiscard]] LabeledDataset subset(std::span<const std::size_t> indices, SplitTag tag) const;
  /// Same pixels with the roles of u and s exchanged.
  [[nodiscard]] LabeledDataset with_roles_swapped() const;
};

struct SplitFractions {
  double train = 0.0;
  double val = 0.0;
  double test = 0.0;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

struct SplitResult {
  LabeledDataset train;
  LabeledDataset val;
  LabeledDataset test;
};

/// Stratified by (u, s). Split sizes follow the fractions exactly up to
/// rounding; within a split, indices are ascending.
SplitIndices split_indices(const LabeledDataset& ds, const SplitFractions& fractions, std::uint64_t seed);
SplitResult split(const LabeledDataset& ds, const SplitFractions& fractions, std::uint64_t seed);

/// VLDS container. Errors are FormatError with a kind per failure.
inline constexpr std::uint32_t kDatasetVersion = 1;
void save_dataset(const std::filesystem::path& path, const LabeledDataset& ds);
LabeledDataset load_dataset(const std::filesystem::path& path);

}  // namespace varleak::data
