// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "varleak/error.hpp"
#include "varleak/gauss/gaussian.hpp"

using namespace varleak;
using namespace varleak::gauss;
using core::Rng;
using core::Tape;

namespace {

DiagonalGaussian one_dim(double mu, double sigma) { return {Tensor::row({mu}), Tensor::row({sigma})}; }

// Independent oracle: KL from a P=N(mu, sigma^2) sampler against the standard normal.
double monte_carlo_kl(const DiagonalGaussian& g, std::size_t n, Rng& rng) {
  const PriorSpec prior{g.dim()};
  return mc_kl(
      [&](Rng& r, std::span<double> z) {
        for (std::size_t j = 0; j < z.size(); ++j) z[j] = g.mu[j] + g.sigma[j] * r.normal();
      },
      [&](std::span<const double> z) { return log_density(g, 0, z); },
      [&](std::span<const double> z) { return prior.log_density(z); }, g.dim(), n, rng);
}

}  // namespace

TEST(Reparam, ZeroNoiseReturnsMean) {
  const DiagonalGaussian g{Tensor::row({1.5, -2.0}), Tensor::row({0.3, 4.0})};
  EXPECT_EQ(reparam_sample(g, Tensor::row({0.0, 0.0})), g.mu);
}

TEST(Reparam, StandardPosteriorPassesNoiseThrough) {
  const DiagonalGaussian g{Tensor::row({0.0, 0.0, 0.0}), Tensor::row({1.0, 1.0, 1.0})};
  const Tensor e = Tensor::row({0.25, -1.0, 3.0});
  EXPECT_EQ(reparam_sample(g, e), e);
}

TEST(Reparam, DimensionMismatchAndBadSigmaRejected) {
  const DiagonalGaussian g{Tensor::row({0.0, 0.0}), Tensor::row({1.0, 1.0})};
  EXPECT_THROW(reparam_sample(g, Tensor::row({1.0})), ConfigError);
  const DiagonalGaussian bad{Tensor::row({0.0}), Tensor::row({0.0})};
  EXPECT_THROW(reparam_sample(bad, Tensor::row({1.0})), ConfigError);
  EXPECT_THROW(kl_to_standard_normal(bad), ConfigError);
}

TEST(Reparam, EmpiricalMomentsMatch) {
  const double mu = 0.7, sigma = 1.9;
  const std::size_t n = 100000;
  Rng rng(17);
  const DiagonalGaussian g{Tensor({n, 1}, mu), Tensor({n, 1}, sigma)};
  const Tensor z = reparam_sample(g, rng.normal_tensor({n, 1}));
  double mean = 0.0;
  for (double v : z.values()) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : z.values()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n - 1);
  EXPECT_LE(std::abs(mean - mu), 3.0 * sigma / std::sqrt(static_cast<double>(n)));
  EXPECT_LE(std::abs(var - sigma * sigma) / (sigma * sigma), 0.05);
}

TEST(ClosedFormKl, SpotValues) {
  EXPECT_EQ(kl_to_standard_normal(DiagonalGaussian{Tensor({1, 5}, 0.0), Tensor({1, 5}, 1.0)}), 0.0);
  EXPECT_NEAR(kl_to_standard_normal(one_dim(1.0, 1.0)), 0.5, 1e-12);
  EXPECT_NEAR(kl_to_standard_normal(one_dim(0.0, 2.0)), 0.5 * (4.0 - 1.0 - std::log(4.0)), 1e-12);
  EXPECT_NEAR(kl_to_standard_normal(one_dim(0.0, 2.0)), 0.8069, 1e-4);
}

TEST(ClosedFormKl, SpotValueAgreesWithMonteCarlo) {
  Rng rng(5);
  const auto g = one_dim(0.0, 2.0);
  const double mc = monte_carlo_kl(g, 1000000, rng);
  EXPECT_LE(std::abs(mc - kl_to_standard_normal(g)) / kl_to_standard_normal(g), 0.01);
}

TEST(ClosedFormKl, NonNegativeOnRandomPosteriors) {
  Rng rng(8);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t d = 1 + rng.index(16);
    DiagonalGaussian g{rng.normal_tensor({1, d}), rng.uniform_tensor({1, d}, 0.01, 5.0)};
    EXPECT_GE(kl_to_standard_normal(g), 0.0);
  }
}

TEST(ClosedFormKl, ScalesWithDimension) {
  for (std::size_t d : {1u, 3u, 16u}) {
    const DiagonalGaussian g{Tensor({1, d}, 0.4), Tensor({1, d}, 0.6)};
    EXPECT_NEAR(kl_to_standard_normal(g), static_cast<double>(d) * kl_to_standard_normal(one_dim(0.4, 0.6)), 1e-12);
  }
}

TEST(ClosedFormKl, GradientMatchesFiniteDifferences) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 1 + rng.index(8);
    DiagonalGaussian g{rng.normal_tensor({1, d}), rng.uniform_tensor({1, d}, 0.2, 3.0)};
    const auto grad = kl_gradient(g);
    const double h = 1e-6;
    for (std::size_t j = 0; j < d; ++j) {
      for (int which = 0; which < 2; ++which) {
        Tensor& slot = which == 0 ? g.mu : g.sigma;
        const double orig = slot[j];
        slot[j] = orig + h;
        const double up = kl_to_standard_normal(g);
        slot[j] = orig - h;
        const double down = kl_to_standard_normal(g);
        slot[j] = orig;
        const double numeric = (up - down) / (2.0 * h);
        const double analytic = which == 0 ? grad.d_mu[j] : grad.d_sigma[j];
        EXPECT_LE(std::abs(analytic - numeric) / std::max(1e-6, std::abs(numeric)), 1e-4);
      }
    }
  }
}

TEST(MonteCarloKl, IdenticalDistributionsNearZero) {
  Rng rng(2);
  EXPECT_LE(std::abs(monte_carlo_kl(one_dim(0.0, 1.0), 100000, rng)), 0.02);
}

TEST(MonteCarloKl, ShiftedUnitGaussianIsHalfNat) {
  Rng rng(3);
  EXPECT_NEAR(monte_carlo_kl(one_dim(1.0, 1.0), 1000000, rng), 0.5, 0.01);
}

TEST(MonteCarloKl, AgreesWithClosedFormOnRandomPosteriors) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 1 + rng.index(16);
    DiagonalGaussian g{rng.normal_tensor({1, d}), rng.uniform_tensor({1, d}, 0.3, 2.5)};
    const double exact = kl_to_standard_normal(g);
    const double mc = monte_carlo_kl(g, 1000000, rng);
    EXPECT_LE(std::abs(mc - exact) / exact, 0.02) << "d=" << d;
  }
}

TEST(TapeKl, MatchesClosedFormPerRowAndGradientIsChainRule) {
  Rng rng(9);
  core::ParamSet ps;
  auto& mu = ps.add("mu", rng.normal_tensor({4, 3}));
  auto& ls = ps.add("log_sigma", rng.uniform_tensor({4, 3}, -1.0, 1.0));
  Tape tape;
  auto kl = kl_to_standard_normal(tape.parameter(mu), tape.parameter(ls));
  Tensor sigma(ls.value.shape());
  for (std::size_t i = 0; i < sigma.size(); ++i) sigma[i] = std::exp(ls.value[i]);
  const DiagonalGaussian g{mu.value, sigma};
  const auto per_row = kl_per_example(g);
  for (std::size_t r = 0; r < 4; ++r) EXPECT_NEAR(kl.value()[r], per_row[r], 1e-12);
  tape.backward(core::sum(kl));
  const auto grad = kl_gradient(g);
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    EXPECT_NEAR(mu.grad[i], grad.d_mu[i], 1e-12);
    EXPECT_NEAR(ls.grad[i], grad.d_sigma[i] * sigma[i], 1e-12);
  }
}

TEST(TapeKl, SampleLatentClampsSigma) {
  Tape tape(false);
  auto mu = tape.constant(Tensor::row({0.0, 0.0}));
  auto ls = tape.constant(Tensor::row({-50.0, 50.0}));
  const auto s = sample_latent(mu, ls, Tensor::row({1.0, 1.0}));
  EXPECT_NEAR(s.sigma.value()[0], kSigmaMin, 1e-18);
  EXPECT_NEAR(s.sigma.value()[1], kSigmaMax, 1e-8);
  EXPECT_NEAR(s.z.value()[1], kSigmaMax, 1e-8);
}
