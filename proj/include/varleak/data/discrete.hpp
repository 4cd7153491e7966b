// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "varleak/core/rng.hpp"

namespace varleak::data {

/// Joint probability table over (S, U, X) on small finite alphabets,
/// indexed [s][u][x].
class DiscreteJoint {
 public:
  static constexpr std::size_t kMaxAlphabet = 64;

  /// Normalizes `weights`. Throws ConfigError on negative or non-finite
  /// entries, a zero total, or an alphabet above kMaxAlphabet.
  DiscreteJoint(std::size_t ns, std::size_t nu, std::size_t nx, std::vector<double> weights);

  /// P_{S,X} with U of size one.
  static DiscreteJoint from_sx(std::size_t ns, std::size_t nx, std::vector<double> weights);
  static DiscreteJoint product(const std::vector<double>& ps, const std::vector<double>& pu,
                               const std::vector<double>& px);
  /// Entries drawn uniformly from (0, 1) and normalized.
  static DiscreteJoint random(std::size_t ns, std::size_t nu, std::size_t nx, core::Rng& rng);

  [[nodiscard]] std::size_t ns() const noexcept { return ns_; }
  [[nodiscard]] std::size_t nu() const noexcept { return nu_; }
  [[nodiscard]] std::size_t nx() const noexcept { return nx_; }
  [[nodiscard]] double p(std::size_t s, std::size_t u, std::size_t x) const noexcept {
    return table_[(s * nu_ + u) * nx_ + x];
  }
  [[nodiscard]] const std::vector<double>& table() const noexcept { return table_; }

  /// Row-major ns x nx and nu x nx marginals.
  [[nodiscard]] std::vector<double> p_sx() const;
  [[nodiscard]] std::vector<double> p_ux() const;
  [[nodiscard]] std::vector<double> p_s() const;
  [[nodiscard]] std::vector<double> p_x() const;

 private:
  std::size_t ns_, nu_, nx_;
  std::vector<double> table_;
};

struct SxuSample {
  std::size_t s;
  std::size_t u;
  std::size_t x;
};

/// Seeded i.i.d. sampler over the joint table.
class JointSampler {
 public:
  JointSampler(const DiscreteJoint& joint, std::uint64_t seed);
  SxuSample operator()();

 private:
  std::size_t nu_, nx_;
  std::mt19937_64 engine_;
  std::discrete_distribution<std::size_t> cells_;
};

}  // namespace varleak::data
