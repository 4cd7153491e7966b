// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "varleak/core/rng.hpp"
#include "varleak/core/tape.hpp"
#include "varleak/core/tensor.hpp"

namespace varleak::gauss {

using core::Tensor;
using core::Var;

/// Encoder heads emit log sigma; sigma is kept inside [kSigmaMin, kSigmaMax].
inline constexpr double kSigmaMin = 1e-4;
inline constexpr double kSigmaMax = 1e4;

/// Diagonal Gaussians N(mu, diag(sigma^2)), one per row. A single posterior
/// is a (1, d) tensor pair.
struct DiagonalGaussian {
  Tensor mu;
  Tensor sigma;

  /// Throws ConfigError on mismatched shapes or non-positive sigma.
  void validate() const;
  [[nodiscard]] std::size_t count() const noexcept { return mu.rows(); }
  [[nodiscard]] std::size_t dim() const noexcept { return mu.cols(); }
};

/// Fixed standard isotropic normal prior N(0, I_d).
struct PriorSpec {
  std::size_t dim = 0;

  [[nodiscard]] Tensor sample(std::size_t n, core::Rng& rng) const;
  [[nodiscard]] double log_density(std::span<const double> z) const;
};

/// mu + sigma * eps.
Tensor reparam_sample(const DiagonalGaussian& g, const Tensor& eps);

/// Closed-form KL(N(mu, sigma^2) || N(0, I)) summed over every coordinate
/// and every row: 0.5 * sum(sigma^2 + mu^2 - 1 - ln sigma^2).
double kl_to_standard_normal(const DiagonalGaussian& g);
/// Same, one value per row.
std::vector<double> kl_per_example(const DiagonalGaussian& g);

struct KlGradient {
  Tensor d_mu;
  Tensor d_sigma;
};
/// Analytic gradient of kl_to_standard_normal: (mu, sigma - 1/sigma).
KlGradient kl_gradient(const DiagonalGaussian& g);

double log_density(const DiagonalGaussian& g, std::size_t row, std::span<const double> z);

/// Monte-Carlo KL(P || Q) = mean over z_i ~ P of log p(z_i) - log q(z_i).
double mc_kl(const std::function<void(core::Rng&, std::span<double>)>& sample_p,
             const std::function<double(std::span<const double>)>& log_p,
             const std::function<double(std::span<const double>)>& log_q, std::size_t dim, std::size_t n,
             core::Rng& rng);

// Differentiable forms used by the training losses.

struct LatentSample {
  Var sigma;
  Var z;
};

/// sigma = exp(clamp(log_sigma)); z = mu + sigma * eps.
LatentSample sample_latent(Var mu, Var log_sigma, const Tensor& eps);
/// Per-row closed-form KL to N(0, I) from (mu, log sigma); shape (n, 1).
Var kl_to_standard_normal(Var mu, Var log_sigma);

}  // namespace varleak::gauss
