// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "varleak/core/layers.hpp"
#include "varleak/gauss/gaussian.hpp"
#include "varleak/models/arch.hpp"

namespace varleak::models {

using core::Mode;
using core::Network;
using core::Tape;
using core::Tensor;
using core::Var;

struct BundleDims {
  core::Shape input;
  std::size_t d_z = 8;
  std::size_t u_classes = 10;
  std::size_t s_classes = 3;

  bool operator==(const BundleDims&) const = default;
};

/// Encoder f_phi (trunk plus mu and log sigma heads), utility decoder g_theta,
/// latent discriminator D_eta and attribute-class discriminator D_omega.
class ModelBundle {
 public:
  /// Heads and the discriminators' final layers start at zero, so a fresh
  /// bundle has mu = 0, sigma = 1 and both discriminators output 0.5.
  ModelBundle(ArchConfig arch, BundleDims dims, std::uint64_t seed);

  struct Encoded {
    Var mu;
    Var log_sigma;
    Var sigma;
    Var z;
  };
  /// x has shape (n, input...), eps (n, d_z).
  Encoded encode(Tape& tape, Var x, const Tensor& eps, Mode mode);
  Var decode_utility(Tape& tape, Var z, Mode mode);
  Var decode_utility_logits(Tape& tape, Var z, Mode mode);
  Var discriminate_latent_logits(Tape& tape, Var z, Mode mode);
  Var discriminate_attribute_logits(Tape& tape, Var u, Mode mode);

  // Evaluation-mode conveniences (batch-norm uses running statistics).
  [[nodiscard]] std::pair<gauss::DiagonalGaussian, Tensor> encode(const Tensor& x, const Tensor& eps) const;
  [[nodiscard]] gauss::DiagonalGaussian posterior(const Tensor& x) const;
  [[nodiscard]] Tensor decode_utility(const Tensor& z) const;
  [[nodiscard]] Tensor discriminate_latent(const Tensor& z) const;
  [[nodiscard]] Tensor discriminate_attribute(const Tensor& u) const;

  [[nodiscard]] const ArchConfig& arch() const noexcept { return arch_; }
  [[nodiscard]] const BundleDims& dims() const noexcept { return dims_; }
  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }

  Network& encoder_trunk() noexcept { return trunk_; }
  Network& mu_head() noexcept { return mu_head_; }
  Network& log_sigma_head() noexcept { return log_sigma_head_; }
  Network& decoder() noexcept { return decoder_; }
  Network& latent_disc() noexcept { return latent_disc_; }
  Network& attr_disc() noexcept { return attr_disc_; }

  /// Parameter groups: phi (encoder), theta (decoder), eta, omega.
  std::vector<core::ParamSet*> phi();
  std::vector<core::ParamSet*> theta();
  std::vector<core::ParamSet*> eta();
  std::vector<core::ParamSet*> omega();
  /// Every network keyed by its checkpoint prefix.
  std::vector<std::pair<std::string, const core::ParamSet*>> named_sets() const;

  void save(const std::filesystem::path& path) const;
  static ModelBundle load(const std::filesystem::path& path);

 private:
  ArchConfig arch_;
  BundleDims dims_;
  std::uint64_t seed_ = 0;
  Network trunk_;
  Network mu_head_;
  Network log_sigma_head_;
  Network decoder_;
  Network latent_disc_;
  Network attr_disc_;
};

/// Inference network g_xi: z -> softmax over |S|.
class AdversaryModel {
 public:
  AdversaryModel(const Stack& stack, std::size_t d_z, std::uint64_t seed);
  Network& net() noexcept { return net_; }
  [[nodiscard]] Tensor predict(const Tensor& z) const { return net_.predict(z); }

 private:
  Network net_;
};

/// MINE statistic network T(z, a) on the concatenation of z and a one-hot
/// attribute.
class MineNet {
 public:
  MineNet(const Stack& stack, std::size_t d_z, std::size_t attr_dim, std::uint64_t seed);
  Network& net() noexcept { return net_; }
  [[nodiscard]] std::size_t attr_dim() const noexcept { return attr_dim_; }
  Var statistic(Tape& tape, Var z, Var attr);

 private:
  Network net_;
  std::size_t attr_dim_;
};

/// Row i set to the one-hot code of labels[i].
Tensor one_hot(std::span<const std::size_t> labels, std::size_t classes);
/// Index of the largest entry in each row; ties go to the lowest index.
std::vector<std::size_t> argmax_rows(const Tensor& probs);
double accuracy(const Tensor& probs, std::span<const std::size_t> labels);

}  // namespace varleak::models
