// SPDX-License-Identifier: Apache-2.0
#include "varleak/gauss/gaussian.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "varleak/error.hpp"

namespace varleak::gauss {

namespace {
constexpr double kLogTwoPi = 1.8378770664093454835606594728112;  // ln(2 pi)
}

void DiagonalGaussian::validate() const {
  if (mu.shape() != sigma.shape()) {
    throw ConfigError("DiagonalGaussian: mu " + core::shape_string(mu.shape()) + " and sigma " +
                      core::shape_string(sigma.shape()) + " differ");
  }
  for (double s : sigma.values()) {
    if (!(s > 0.0)) throw ConfigError("DiagonalGaussian: sigma must be strictly positive");
  }
}

Tensor PriorSpec::sample(std::size_t n, core::Rng& rng) const { return rng.normal_tensor({n, dim}); }

double PriorSpec::log_density(std::span<const double> z) const {
  double s = 0.0;
  for (double v : z) s += v * v;
  return -0.5 * (static_cast<double>(z.size()) * kLogTwoPi + s);
}

Tensor reparam_sample(const DiagonalGaussian& g, const Tensor& eps) {
  g.validate();
  if (eps.size() != g.mu.size()) {
    throw ConfigError("reparam_sample: eps has " + std::to_string(eps.size()) + " values, expected " +
                      std::to_string(g.mu.size()));
  }
  Tensor z(g.mu.shape());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = g.mu[i] + g.sigma[i] * eps[i];
  return z;
}

std::vector<double> kl_per_example(const DiagonalGaussian& g) {
  g.validate();
  const std::size_t n = g.count();
  const std::size_t d = g.dim();
  std::vector<double> out(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double m = g.mu[r * d + j];
      const double sd = g.sigma[r * d + j];
      s += sd * sd + m * m - 1.0 - 2.0 * std::log(sd);
    }
    out[r] = 0.5 * s;
  }
  return out;
}

double kl_to_standard_normal(const DiagonalGaussian& g) {
  double total = 0.0;
  for (double v : kl_per_example(g)) total += v;
  return total;
}

KlGradient kl_gradient(const DiagonalGaussian& g) {
  g.validate();
  KlGradient out{g.mu, Tensor(g.sigma.shape())};
  for (std::size_t i = 0; i < g.sigma.size(); ++i) out.d_sigma[i] = g.sigma[i] - 1.0 / g.sigma[i];
  return out;
}

double log_density(const DiagonalGaussian& g, std::size_t row, std::span<const double> z) {
  const std::size_t d = g.dim();
  if (z.size() != d) throw ConfigError("log_density: dimension mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = g.sigma[row * d + j];
    const double u = (z[j] - g.mu[row * d + j]) / sd;
    s += u * u + 2.0 * std::log(sd);
  }
  return -0.5 * (static_cast<double>(d) * kLogTwoPi + s);
}

double mc_kl(const std::function<void(core::Rng&, std::span<double>)>& sample_p,
             const std::function<double(std::span<const double>)>& log_p,
             const std::function<double(std::span<const double>)>& log_q, std::size_t dim, std::size_t n,
             core::Rng& rng) {
  if (n == 0) throw ConfigError("mc_kl needs at least one sample");
  std::vector<double> z(dim);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sample_p(rng, z);
    acc += log_p(z) - log_q(z);
  }
  return acc / static_cast<double>(n);
}

LatentSample sample_latent(Var mu, Var log_sigma, const Tensor& eps) {
  if (mu.shape() != log_sigma.shape() || eps.size() != mu.value().size()) {
    throw ConfigError("sample_latent: mu " + core::shape_string(mu.shape()) + ", log sigma " +
                      core::shape_string(log_sigma.shape()) + ", eps " + core::shape_string(eps.shape()));
  }
  core::Tape& tape = *mu.tape();
  Var sigma = core::exp(core::clamp(log_sigma, std::log(kSigmaMin), std::log(kSigmaMax)));
  Var z = core::add(mu, core::mul(sigma, tape.constant(eps.reshaped(mu.shape()))));
  return {sigma, z};
}

Var kl_to_standard_normal(Var mu, Var log_sigma) {
  Var ls = core::clamp(log_sigma, std::log(kSigmaMin), std::log(kSigmaMax));
  // sigma^2 + mu^2 - 1 - 2 log sigma
  Var terms = core::sub(core::add(core::exp(core::scale(ls, 2.0)), core::square(mu)),
                        core::add_scalar(core::scale(ls, 2.0), 1.0));
  return core::scale(core::row_sum(terms), 0.5);
}

}  // namespace varleak::gauss
