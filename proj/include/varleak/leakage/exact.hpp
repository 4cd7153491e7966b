// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "varleak/data/discrete.hpp"

namespace varleak::leakage {

struct Information {
  double nats = 0.0;
  [[nodiscard]] double bits() const noexcept;
};

/// Entropy of a probability vector, in nats.
double entropy(std::span<const double> p);

/// I(A;B) for a row-major na x nb joint table. Throws ConfigError unless the
/// table is nonnegative and sums to 1 within 1e-9.
Information mutual_information(std::span<const double> joint, std::size_t na, std::size_t nb);
/// I(A;B|C) for a table indexed [c][a][b].
Information conditional_mutual_information(std::span<const double> joint, std::size_t nc, std::size_t na,
                                           std::size_t nb);

enum class Pair { kSX, kUX, kSU };
Information exact_mi(const data::DiscreteJoint& joint, Pair pair);

struct MarkovCheck {
  Information i_sz;
  Information i_xz;
  Information i_xz_given_s;
  /// I(S;Z) - I(X;Z) + I(X;Z|S), in nats.
  double residual = 0.0;
  /// I(X;Z) - I(S;Z), in nats.
  double dpi_margin = 0.0;
};

/// p_sx is ns x nx; channel is nx x nz with rows summing to 1. Both
/// alphabets are limited to 32 symbols.
MarkovCheck markov_identity_check(std::span<const double> p_sx, std::size_t ns, std::size_t nx,
                                  std::span<const double> channel, std::size_t nz);

}  // namespace varleak::leakage
