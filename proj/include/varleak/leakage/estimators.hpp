// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "varleak/core/layers.hpp"
#include "varleak/data/dataset.hpp"
#include "varleak/gauss/gaussian.hpp"
#include "varleak/models/bundle.hpp"

namespace varleak::leakage {

using core::Tensor;

enum class EstimatorTag { kMine, kDensityRatio, kExact };
const char* estimator_name(EstimatorTag tag) noexcept;

struct MiEstimate {
  double value = 0.0;  // nats
  EstimatorTag tag = EstimatorTag::kMine;
  std::size_t samples = 0;
  std::size_t steps = 0;
  std::vector<std::string> warnings;
};

// Density-ratio estimate of KL(P || Q) from a discriminator with c=1 on P.

inline constexpr double kProbabilityClamp = 1e-7;

struct DensityRatio {
  double value = 0.0;
  /// Outputs that had to be clamped into [1e-7, 1 - 1e-7].
  std::size_t clamped = 0;
};

/// Mean of log(D / (1 - D)) over discriminator outputs on P samples.
DensityRatio density_ratio_kl(std::span<const double> d_on_p);
/// Weighted form for enumerable supports: sum_i w_i log(D_i / (1 - D_i)),
/// with weights summing to 1.
DensityRatio density_ratio_kl(std::span<const double> d_on_p, std::span<const double> weights);
/// Same, evaluating `disc` (sigmoid output, eval mode) on the samples.
DensityRatio density_ratio_kl(const core::Network& disc, const Tensor& samples);

struct DiscriminatorFit {
  std::size_t steps = 2000;
  std::size_t batch = 256;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

/// Trains a sigmoid-output classifier with c=1 on `p` rows and c=0 on `q` rows
/// by minimizing binary cross-entropy.
core::Network fit_discriminator(const Tensor& p, const Tensor& q, const models::Stack& stack,
                                const DiscriminatorFit& fit);

struct Complexity {
  double kl_upper = 0.0;
  double correction = 0.0;
  double corrected = 0.0;
  std::size_t clamped = 0;
};

/// corrected = mean per-sample KL - density-ratio correction.
Complexity complexity_from_parts(std::span<const double> per_sample_kl, std::span<const double> d_on_posterior);

/// Posteriors of the selected examples, computed in chunks (eval mode).
gauss::DiagonalGaussian posterior_of(const models::ModelBundle& bundle, const data::LabeledDataset& ds,
                                     std::span<const std::size_t> indices, std::size_t chunk = 1024);
std::vector<std::size_t> all_indices(const data::LabeledDataset& ds, std::size_t limit = 0);

/// Complexity on a split: z drawn once with noise from `eval_seed`; D_eta is
/// the bundle's latent discriminator. `limit` caps the example count (0 = all).
Complexity complexity_estimate(const models::ModelBundle& bundle, const data::LabeledDataset& split,
                               std::uint64_t eval_seed, std::size_t limit = 0);

// Attribute-inference adversary.

struct AttackConfig {
  double data_ratio = 1.0;
  std::size_t epochs = 30;
  std::size_t batch = 256;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct AttackResult {
  core::Network adversary;
  double accuracy = 0.0;
  /// Mean test cross-entropy, an upper bound on H(S|Z) in nats.
  double xent = 0.0;
  std::size_t train_examples = 0;
  std::vector<std::string> warnings;
};

/// Trains `stack` (z -> softmax over classes) on z ~ posterior with fresh
/// noise every epoch, on the first ceil(ratio * n) examples of a seeded
/// permutation; evaluates on one seeded draw from the test posterior.
AttackResult train_adversary(const models::Stack& stack, const gauss::DiagonalGaussian& train_post,
                             std::span<const std::size_t> train_labels, const gauss::DiagonalGaussian& test_post,
                             std::span<const std::size_t> test_labels, std::size_t classes, const AttackConfig& config);

/// Bundle form: the encoder is frozen and only read; labels are s.
AttackResult train_adversary(const models::ModelBundle& bundle, const data::LabeledDataset& train,
                             const data::LabeledDataset& test, const AttackConfig& config);

// MINE.

struct MineConfig {
  std::size_t steps = 5000;
  std::size_t batch = 256;
  double lr = 1e-3;
  double ema = 0.99;
  double holdout = 0.2;
  /// Shuffled copies of the held-out set used for the marginal term.
  std::size_t eval_shuffles = 8;
  std::uint64_t seed = 0;
};

/// Donsker-Varadhan lower bound on I(Z;A) with a Table-1 statistic network.
MiEstimate mine_estimate(const Tensor& z, const Tensor& a, const MineConfig& config,
                         const models::Stack& stack = models::mine_ref_stack());

}  // namespace varleak::leakage
