// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "varleak/data/dataset.hpp"

namespace varleak::train {

/// Warm-up of (phi, theta) on the block-1 loss before the main loop.
struct WarmupConfig {
  double lr = 0.005;
  std::size_t iterations = 50;
  std::size_t batch = 1024;
  /// Beta used in the warm-up loss; unset means the main beta.
  std::optional<double> beta;

  bool operator==(const WarmupConfig&) const = default;
};

struct TrainConfig {
  std::string preset = "custom";
  std::string arch = "desk-mlp";
  double beta = 0.01;
  std::size_t d_z = 8;
  std::size_t batch = 2048;
  std::size_t iterations = 500;
  /// Rate of blocks 2 to 5; block 1 uses lr * block1_lr_factor.
  double lr = 1e-4;
  double block1_lr_factor = 5.0;
  WarmupConfig warmup;
  std::uint64_t seed = 0;
  /// When false, batch-norm layers are removed from the architecture.
  bool batch_norm = true;
  /// Early stop after this many evaluations without a new best validation
  /// utility accuracy. 0 disables early stopping.
  std::size_t patience = 20;
  std::size_t eval_every = 10;
  /// Train accuracy is measured on at most this many training examples
  /// (0 = all). Validation and test always use the full split.
  std::size_t eval_train_limit = 2048;
  std::size_t checkpoint_every = 0;
  double gumbel_temperature = 0.5;
  data::SplitFractions split{6.0 / 7.0 * 0.9, 6.0 / 7.0 * 0.1, 1.0 / 7.0};
  std::uint64_t split_seed = 0;

  /// Throws ConfigError on out-of-range fields.
  void validate() const;
  [[nodiscard]] double block1_lr() const noexcept { return lr * block1_lr_factor; }
  [[nodiscard]] double warmup_beta() const noexcept { return warmup.beta.value_or(beta); }
};

/// `mnist-ref` (Colored-MNIST tables), `celeba-ref` and `mnist-desk` (CPU-sized).
TrainConfig train_preset(const std::string& name);
std::vector<std::string> train_preset_names();

nlohmann::json to_json(const TrainConfig& config);
/// Fields absent from `j` keep the values of `base`.
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {});

}  // namespace varleak::train
