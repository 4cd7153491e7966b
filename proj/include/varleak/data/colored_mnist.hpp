// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "varleak/data/dataset.hpp"
#include "varleak/data/digits.hpp"

namespace varleak::data {

/// Probabilities of (red, green, blue).
struct ColorDistribution {
  std::array<double, 3> p{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};

  /// Throws ConfigError unless entries are nonnegative and sum to 1 within 1e-12.
  void validate() const;
  [[nodiscard]] std::size_t draw(double uniform01) const noexcept;

  static ColorDistribution balanced() { return {}; }
  static ColorDistribution biased() { return {{0.5, 1.0 / 6.0, 1.0 / 3.0}}; }
  /// "balanced" or "biased".
  static ColorDistribution preset(const std::string& name);
};

struct ColoredMnistOptions {
  ColorDistribution colors;
  std::uint64_t seed = 0;
  /// u = color and s = digit instead of the default u = digit, s = color.
  bool color_is_utility = false;
  /// Worker threads; output does not depend on this.
  unsigned threads = 1;
};

/// Each digit's intensity is written into the channel of its color; the other
/// channels stay zero. The color of example i depends only on (seed, i).
LabeledDataset generate_colored_mnist(const GrayDigits& source, const ColoredMnistOptions& options);

struct ChiSquareResult {
  double statistic = 0.0;
  std::size_t dof = 0;
  double critical = 0.0;
  [[nodiscard]] bool independent() const noexcept { return statistic < critical; }
};

/// Pearson independence test on a contingency table of two label vectors.
ChiSquareResult chi_square_independence(const std::vector<std::uint8_t>& a, std::size_t a_classes,
                                        const std::vector<std::uint8_t>& b, std::size_t b_classes,
                                        double quantile = 0.999);

std::vector<double> label_frequencies(const std::vector<std::uint8_t>& labels, std::size_t classes);

}  // namespace varleak::data
