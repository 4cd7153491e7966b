// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace varleak::data {

/// Labeled 28x28 grayscale digits.
struct GrayDigits {
  std::uint32_t rows = 28;
  std::uint32_t cols = 28;
  std::vector<std::uint8_t> pixels;
  std::vector<std::uint8_t> labels;

  [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
  [[nodiscard]] std::size_t image_bytes() const noexcept { return static_cast<std::size_t>(rows) * cols; }
};

/// IDX files, plain or gzip-compressed (detected from content).
GrayDigits read_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Loads every digit found in `dir`. Recognized layouts: the standard
/// train-/t10k- file pairs (concatenated, train first) or a single
/// images-idx3-ubyte / labels-idx1-ubyte pair. Each name may carry ".gz".
GrayDigits load_digits_dir(const std::filesystem::path& dir);

/// $VARLEAK_MNIST_DIR when set, otherwise the digits bundled with the source tree.
std::filesystem::path default_digits_dir();

/// Exactly `count` digits. Beyond the source size, digits are reused with a
/// small deterministic translation per pass so repeats are not pixel copies.
GrayDigits expand_digits(const GrayDigits& source, std::size_t count);

}  // namespace varleak::data
