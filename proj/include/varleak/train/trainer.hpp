// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "varleak/core/rng.hpp"
#include "varleak/data/dataset.hpp"
#include "varleak/gauss/gaussian.hpp"
#include "varleak/models/bundle.hpp"
#include "varleak/train/config.hpp"

namespace varleak::train {

using core::Tensor;
using core::Var;

inline constexpr double kNllFloor = 1e-12;
inline constexpr std::size_t kBlockCount = 5;

/// Draws mini-batches without replacement, reshuffling after each pass.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::uint64_t seed);
  /// min(m, n) distinct indices, ascending.
  std::vector<std::size_t> next(std::size_t m);

 private:
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  core::Rng rng_;
};

struct Block1Loss {
  Var loss;
  double nll = 0.0;
  double kl = 0.0;
  /// Labels whose decoder probability fell below kNllFloor.
  std::size_t floored = 0;
};

/// Mean negative log-likelihood of u under the decoder plus beta times the
/// mean closed-form KL of the posterior to N(0, I).
Block1Loss loss_block1(core::Tape& tape, models::ModelBundle& bundle, const Tensor& x,
                       std::span<const std::size_t> u, const Tensor& eps, double beta, core::Mode mode);
/// -beta * (mean log D(z) + mean log(1 - D(z_prior))), D = latent discriminator.
Var loss_block2(core::Tape& tape, models::ModelBundle& bundle, const Tensor& z, const Tensor& z_prior, double beta,
                core::Mode mode);
/// -(mean log D(u_real) + mean log(1 - D(u_fake))), D = attribute discriminator.
Var loss_block4(core::Tape& tape, models::ModelBundle& bundle, const Tensor& u_real, const Tensor& u_fake,
                core::Mode mode);

/// Temperature-relaxed categorical sample: softmax((log p + g) / tau) with
/// Gumbel noise g, given decoder logits.
Var gumbel_softmax(core::Tape& tape, Var logits, double temperature, core::Rng& rng);

/// Warm-up: `config.warmup.iterations` Adam steps of (phi, theta) on the
/// block-1 loss at the warm-up beta. Returns the number of floored labels.
std::size_t pretrain(models::ModelBundle& bundle, const data::LabeledDataset& train, const TrainConfig& config);

using BlockLosses = std::array<double, kBlockCount>;

struct MetricRow {
  std::size_t iter = 0;
  BlockLosses losses{};
  double util_acc_train = 0.0;
  double util_acc_val = 0.0;
  double util_acc_test = 0.0;
  double kl_upper = 0.0;
  double kl_correction = 0.0;
};

struct TrainState {
  TrainState(models::ModelBundle bundle, std::size_t train_size, std::uint64_t seed);

  models::ModelBundle bundle;
  std::size_t iteration = 0;
  std::vector<BlockLosses> losses;
  std::vector<MetricRow> metrics;
  std::size_t floored = 0;
  core::Rng rng;
  BatchSampler sampler;
};

/// Bundle for `config` sized to the dataset's input and alphabets.
models::ModelBundle make_bundle(const TrainConfig& config, const data::LabeledDataset& ds);

/// Runs block k (1..5) on fresh samples and returns its loss. Only the
/// parameters named by the block change.
double run_block(TrainState& state, int block, const data::LabeledDataset& train, const gauss::PriorSpec& prior,
                 const TrainConfig& config);
/// Blocks 1 to 5 in order. With beta = 0, blocks 2 and 3 are skipped and
/// report 0.
void train_iteration(TrainState& state, const data::LabeledDataset& train, const gauss::PriorSpec& prior,
                     const TrainConfig& config);

/// Utility accuracy of sampled z (noise from `eval_seed`) on up to `limit`
/// examples of `split` (0 = all).
double utility_accuracy(const models::ModelBundle& bundle, const data::LabeledDataset& split,
                        std::uint64_t eval_seed, std::size_t limit = 0);

struct TrainOutputs {
  /// Metric history CSV, rewritten after each evaluation.
  std::optional<std::filesystem::path> metrics_csv;
  /// Receives iter_NNNNNN.vlmb every `checkpoint_every` iterations.
  std::optional<std::filesystem::path> checkpoint_dir;
  bool skip_pretrain = false;
};

struct TrainResult {
  models::ModelBundle bundle;
  std::vector<MetricRow> metrics;
  std::size_t iterations_run = 0;
  bool early_stopped = false;
  std::size_t floored = 0;
};

/// Warm-up, then train_iteration until the budget or the early stop.
TrainResult train(const TrainConfig& config, const data::SplitResult& splits, const TrainOutputs& outputs = {});
/// Splits `dataset` with config.split and config.split_seed first.
TrainResult train(const TrainConfig& config, const data::LabeledDataset& dataset, const TrainOutputs& outputs = {});
/// Same, continuing from an existing bundle (warm-up is skipped).
TrainResult train(const TrainConfig& config, models::ModelBundle bundle, const data::SplitResult& splits,
                  const TrainOutputs& outputs = {});

inline constexpr const char* kMetricsHeader =
    "iter,block1_loss,block2_loss,block3_loss,block4_loss,block5_loss,util_acc_train,util_acc_val,util_acc_test,"
    "kl_upper,kl_correction";
void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricRow> rows);

}  // namespace varleak::train
