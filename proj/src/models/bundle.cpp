// SPDX-License-Identifier: Apache-2.0
#include "varleak/models/bundle.hpp"

#include <cmath>

#include "varleak/core/rng.hpp"
#include "varleak/error.hpp"
#include "varleak/models/checkpoint.hpp"

namespace varleak::models {

namespace {

core::Shape flat(std::size_t n) { return {n}; }

nlohmann::json dims_json(const BundleDims& d) {
  return {{"input", d.input}, {"d_z", d.d_z}, {"u_classes", d.u_classes}, {"s_classes", d.s_classes}};
}

}  // namespace

ModelBundle::ModelBundle(ArchConfig arch, BundleDims dims, std::uint64_t seed)
    : arch_(std::move(arch)), dims_(std::move(dims)), seed_(seed) {
  if (dims_.d_z == 0) throw ConfigError("d_z must be positive");
  using core::derive_seed;
  trunk_ = Network("encoder", dims_.input, arch_.encoder_trunk, derive_seed(seed, 1));
  if (trunk_.output_shape().size() != 1) throw ConfigError("encoder trunk must end with a flat output");
  mu_head_ = Network("mu", trunk_.output_shape(), {LayerSpec::affine(dims_.d_z)}, derive_seed(seed, 2));
  log_sigma_head_ = Network("log_sigma", trunk_.output_shape(), {LayerSpec::affine(dims_.d_z)}, derive_seed(seed, 3));
  decoder_ = Network("decoder", flat(dims_.d_z), arch_.decoder, derive_seed(seed, 4));
  latent_disc_ = Network("latent_disc", flat(dims_.d_z), arch_.latent_disc, derive_seed(seed, 5));
  attr_disc_ = Network("attr_disc", flat(dims_.u_classes), arch_.attr_disc, derive_seed(seed, 6));
  if (decoder_.output_size() != dims_.u_classes) throw ConfigError("decoder must emit |U| probabilities");
  if (latent_disc_.output_size() != 1 || attr_disc_.output_size() != 1) {
    throw ConfigError("discriminators must emit a single probability");
  }
  mu_head_.zero_last_affine();
  log_sigma_head_.zero_last_affine();
  latent_disc_.zero_last_affine();
  attr_disc_.zero_last_affine();
}

ModelBundle::Encoded ModelBundle::encode(Tape& tape, Var x, const Tensor& eps, Mode mode) {
  Var h = trunk_.forward(tape, x, mode);
  Var mu = mu_head_.forward(tape, h, mode);
  Var ls = log_sigma_head_.forward(tape, h, mode);
  const auto sample = gauss::sample_latent(mu, ls, eps);
  return {mu, ls, sample.sigma, sample.z};
}

Var ModelBundle::decode_utility(Tape& tape, Var z, Mode mode) { return decoder_.forward(tape, z, mode); }
Var ModelBundle::decode_utility_logits(Tape& tape, Var z, Mode mode) {
  return decoder_.forward_logits(tape, z, mode);
}
Var ModelBundle::discriminate_latent_logits(Tape& tape, Var z, Mode mode) {
  return latent_disc_.forward_logits(tape, z, mode);
}
Var ModelBundle::discriminate_attribute_logits(Tape& tape, Var u, Mode mode) {
  return attr_disc_.forward_logits(tape, u, mode);
}

gauss::DiagonalGaussian ModelBundle::posterior(const Tensor& x) const {
  const Tensor h = trunk_.predict(x);
  gauss::DiagonalGaussian g{mu_head_.predict(h), log_sigma_head_.predict(h)};
  const double lo = std::log(gauss::kSigmaMin), hi = std::log(gauss::kSigmaMax);
  for (auto& v : g.sigma.values()) v = std::exp(std::clamp(v, lo, hi));
  return g;
}

std::pair<gauss::DiagonalGaussian, Tensor> ModelBundle::encode(const Tensor& x, const Tensor& eps) const {
  auto g = posterior(x);
  Tensor z = gauss::reparam_sample(g, eps);
  return {std::move(g), std::move(z)};
}

Tensor ModelBundle::decode_utility(const Tensor& z) const { return decoder_.predict(z); }
Tensor ModelBundle::discriminate_latent(const Tensor& z) const { return latent_disc_.predict(z); }
Tensor ModelBundle::discriminate_attribute(const Tensor& u) const { return attr_disc_.predict(u); }

std::vector<core::ParamSet*> ModelBundle::phi() {
  return {&trunk_.params(), &mu_head_.params(), &log_sigma_head_.params()};
}
std::vector<core::ParamSet*> ModelBundle::theta() { return {&decoder_.params()}; }
std::vector<core::ParamSet*> ModelBundle::eta() { return {&latent_disc_.params()}; }
std::vector<core::ParamSet*> ModelBundle::omega() { return {&attr_disc_.params()}; }

std::vector<std::pair<std::string, const core::ParamSet*>> ModelBundle::named_sets() const {
  return {{"encoder", &trunk_.params()},        {"mu", &mu_head_.params()},
          {"log_sigma", &log_sigma_head_.params()}, {"decoder", &decoder_.params()},
          {"latent_disc", &latent_disc_.params()}, {"attr_disc", &attr_disc_.params()}};
}

void ModelBundle::save(const std::filesystem::path& path) const {
  const nlohmann::json desc{{"kind", "bundle"}, {"arch", to_json(arch_)}, {"dims", dims_json(dims_)}, {"seed", seed_}};
  write_checkpoint(path, desc, named_sets());
}

ModelBundle ModelBundle::load(const std::filesystem::path& path) {
  const auto contents = read_checkpoint(path);
  const auto& d = contents.descriptor;
  if (d.value("kind", "") != "bundle") {
    throw FormatError(FormatError::Kind::kUnrecognized, path.string() + " does not hold a model bundle");
  }
  ModelBundle bundle = [&] {
    try {
      BundleDims dims{d.at("dims").at("input").get<core::Shape>(), d.at("dims").at("d_z").get<std::size_t>(),
                      d.at("dims").at("u_classes").get<std::size_t>(), d.at("dims").at("s_classes").get<std::size_t>()};
      return ModelBundle(arch_from_json(d.at("arch")), dims, d.at("seed").get<std::uint64_t>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(FormatError::Kind::kCorrupt, std::string("bad checkpoint descriptor: ") + e.what());
    }
  }();
  restore_params(contents, "encoder", bundle.trunk_.params());
  restore_params(contents, "mu", bundle.mu_head_.params());
  restore_params(contents, "log_sigma", bundle.log_sigma_head_.params());
  restore_params(contents, "decoder", bundle.decoder_.params());
  restore_params(contents, "latent_disc", bundle.latent_disc_.params());
  restore_params(contents, "attr_disc", bundle.attr_disc_.params());
  return bundle;
}

AdversaryModel::AdversaryModel(const Stack& stack, std::size_t d_z, std::uint64_t seed)
    : net_("adversary", flat(d_z), stack, seed) {}

MineNet::MineNet(const Stack& stack, std::size_t d_z, std::size_t attr_dim, std::uint64_t seed)
    : net_("mine", flat(d_z + attr_dim), stack, seed), attr_dim_(attr_dim) {
  if (net_.output_size() != 1) throw ConfigError("MINE statistic network must emit one value");
}

Var MineNet::statistic(Tape& tape, Var z, Var attr) {
  return net_.forward(tape, core::concat_cols(z, attr), Mode::kTrain);
}

Tensor one_hot(std::span<const std::size_t> labels, std::size_t classes) {
  Tensor out({labels.size(), classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw ConfigError("label out of range for one-hot encoding");
    out.at(i, labels[i]) = 1.0;
  }
  return out;
}

std::vector<std::size_t> argmax_rows(const Tensor& probs) {
  std::vector<std::size_t> out(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    const auto row = probs.row_span(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (row[c] > row[best]) best = c;
    }
    out[r] = best;
  }
  return out;
}

double accuracy(const Tensor& probs, std::span<const std::size_t> labels) {
  if (probs.rows() != labels.size() || labels.empty()) throw ConfigError("accuracy: prediction/label count mismatch");
  const auto pred = argmax_rows(probs);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

}  // namespace varleak::models
