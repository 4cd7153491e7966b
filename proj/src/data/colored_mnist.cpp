// SPDX-License-Identifier: Apache-2.0
#include "varleak/data/colored_mnist.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <thread>

#include "varleak/core/rng.hpp"
#include "varleak/error.hpp"

namespace varleak::data {

void ColorDistribution::validate() const {
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("color probabilities must be nonnegative");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError("color probabilities must sum to 1");
}

std::size_t ColorDistribution::draw(double uniform01) const noexcept {
  double acc = 0.0;
  for (std::size_t c = 0; c + 1 < p.size(); ++c) {
    acc += p[c];
    if (uniform01 < acc) return c;
  }
  // Land on the last color with positive mass.
  for (std::size_t c = p.size(); c-- > 0;) {
    if (p[c] > 0.0) return c;
  }
  return 0;
}

ColorDistribution ColorDistribution::preset(const std::string& name) {
  if (name == "balanced") return balanced();
  if (name == "biased") return biased();
  throw ConfigError("unknown color preset '" + name + "' (expected balanced or biased)");
}

LabeledDataset generate_colored_mnist(const GrayDigits& source, const ColoredMnistOptions& options) {
  options.colors.validate();
  if (source.size() == 0 || source.pixels.size() != source.size() * source.image_bytes()) {
    throw ConfigError("malformed digit source");
  }
  for (auto l : source.labels) {
    if (l > 9) throw ConfigError("digit label out of range in source");
  }
  const std::size_t n = source.size();
  const std::size_t ib = source.image_bytes();
  LabeledDataset ds;
  ds.height = source.rows;
  ds.width = source.cols;
  ds.channels = 3;
  ds.u_classes = 10;
  ds.s_classes = 3;
  ds.pixels.assign(n * ib * 3, 0);
  ds.u.resize(n);
  ds.s.resize(n);
  const std::uint64_t color_seed = core::derive_seed(options.seed, 0xC0105);

  auto render = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t color = options.colors.draw(core::counter_uniform(color_seed, i));
      ds.u[i] = source.labels[i];
      ds.s[i] = static_cast<std::uint8_t>(color);
      const std::uint8_t* src = source.pixels.data() + i * ib;
      std::uint8_t* dst = ds.pixels.data() + i * ib * 3;
      for (std::size_t p = 0; p < ib; ++p) dst[p * 3 + color] = src[p];
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(options.threads, n));
  if (workers == 1) {
    render(0, n);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(render, n * w / workers, n * (w + 1) / workers);
  }
  return options.color_is_utility ? ds.with_roles_swapped() : ds;
}

std::vector<double> label_frequencies(const std::vector<std::uint8_t>& labels, std::size_t classes) {
  std::vector<double> f(classes, 0.0);
  for (auto l : labels) {
    if (l >= classes) throw ConfigError("label out of range");
    f[l] += 1.0;
  }
  for (auto& v : f) v /= static_cast<double>(std::max<std::size_t>(1, labels.size()));
  return f;
}

ChiSquareResult chi_square_independence(const std::vector<std::uint8_t>& a, std::size_t a_classes,
                                        const std::vector<std::uint8_t>& b, std::size_t b_classes,
                                        double quantile) {
  if (a.size() != b.size() || a.empty()) throw ConfigError("chi-square needs two equal-length, nonempty samples");
  std::vector<double> table(a_classes * b_classes, 0.0), ra(a_classes, 0.0), rb(b_classes, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] >= a_classes || b[i] >= b_classes) throw ConfigError("label out of range");
    table[a[i] * b_classes + b[i]] += 1.0;
    ra[a[i]] += 1.0;
    rb[b[i]] += 1.0;
  }
  const double n = static_cast<double>(a.size());
  ChiSquareResult out;
  std::size_t used_a = 0, used_b = 0;
  for (double v : ra) used_a += v > 0 ? 1 : 0;
  for (double v : rb) used_b += v > 0 ? 1 : 0;
  for (std::size_t i = 0; i < a_classes; ++i) {
    for (std::size_t j = 0; j < b_classes; ++j) {
      const double expected = ra[i] * rb[j] / n;
      if (expected > 0.0) out.statistic += (table[i * b_classes + j] - expected) * (table[i * b_classes + j] - expected) / expected;
    }
  }
  out.dof = (used_a > 0 ? used_a - 1 : 0) * (used_b > 0 ? used_b - 1 : 0);
  out.critical = out.dof == 0 ? 0.0
                              : boost::math::quantile(boost::math::chi_squared(static_cast<double>(out.dof)), quantile);
  // Degenerate tables (a constant label) are trivially independent.
  if (out.dof == 0) out.critical = std::numeric_limits<double>::infinity();
  return out;
}

}  // namespace varleak::data
