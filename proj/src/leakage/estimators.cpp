// SPDX-License-Identifier: Apache-2.0
#include "varleak/leakage/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "varleak/core/adam.hpp"
#include "varleak/core/rng.hpp"
#include "varleak/error.hpp"

namespace varleak::leakage {

using core::Mode;
using core::Rng;
using core::Tape;

const char* estimator_name(EstimatorTag tag) noexcept {
  switch (tag) {
    case EstimatorTag::kMine: return "mine";
    case EstimatorTag::kDensityRatio: return "density-ratio";
    case EstimatorTag::kExact: return "exact";
  }
  return "?";
}

DensityRatio density_ratio_kl(std::span<const double> d_on_p) {
  if (d_on_p.empty()) throw ConfigError("density-ratio estimate needs at least one sample");
  DensityRatio out;
  double acc = 0.0;
  for (double d : d_on_p) {
    if (!(d >= kProbabilityClamp && d <= 1.0 - kProbabilityClamp)) {
      ++out.clamped;
      d = std::clamp(std::isnan(d) ? 0.5 : d, kProbabilityClamp, 1.0 - kProbabilityClamp);
    }
    acc += std::log(d) - std::log1p(-d);
  }
  out.value = acc / static_cast<double>(d_on_p.size());
  return out;
}

DensityRatio density_ratio_kl(std::span<const double> d_on_p, std::span<const double> weights) {
  if (d_on_p.empty() || d_on_p.size() != weights.size()) throw ConfigError("density-ratio weights do not match samples");
  DensityRatio out;
  double acc = 0.0;
  for (std::size_t i = 0; i < d_on_p.size(); ++i) {
    double d = d_on_p[i];
    if (!(d >= kProbabilityClamp && d <= 1.0 - kProbabilityClamp)) {
      ++out.clamped;
      d = std::clamp(std::isnan(d) ? 0.5 : d, kProbabilityClamp, 1.0 - kProbabilityClamp);
    }
    acc += weights[i] * (std::log(d) - std::log1p(-d));
  }
  out.value = acc;
  return out;
}

namespace {

Tensor predict_chunked(const core::Network& net, const Tensor& x, std::size_t chunk = 4096) {
  if (x.rows() <= chunk) return net.predict(x);
  Tensor out({x.rows(), net.output_size()});
  for (std::size_t b = 0; b < x.rows(); b += chunk) {
    const std::size_t e = std::min(x.rows(), b + chunk);
    const Tensor part = net.predict(core::slice_rows(x, b, e));
    std::copy(part.data(), part.data() + part.size(), out.data() + b * net.output_size());
  }
  return out;
}

}  // namespace

DensityRatio density_ratio_kl(const core::Network& disc, const Tensor& samples) {
  const Tensor d = predict_chunked(disc, samples);
  return density_ratio_kl(d.values());
}

core::Network fit_discriminator(const Tensor& p, const Tensor& q, const models::Stack& stack,
                                const DiscriminatorFit& fit) {
  if (p.rows() == 0 || q.rows() == 0 || p.cols() != q.cols()) throw ConfigError("discriminator needs samples of equal width");
  core::Network net("discriminator", {p.cols()}, stack, core::derive_seed(fit.seed, 1));
  if (net.output_size() != 1) throw ConfigError("discriminator must emit one value");
  Rng rng(core::derive_seed(fit.seed, 2));
  std::vector<std::size_t> ip(fit.batch), iq(fit.batch);
  const core::AdamConfig adam{fit.lr};
  for (std::size_t step = 0; step < fit.steps; ++step) {
    for (std::size_t i = 0; i < fit.batch; ++i) {
      ip[i] = rng.index(p.rows());
      iq[i] = rng.index(q.rows());
    }
    net.params().zero_grad();
    Tape tape;
    auto lp = net.forward_logits(tape, tape.constant(core::gather_rows(p, ip)), Mode::kTrain);
    auto lq = net.forward_logits(tape, tape.constant(core::gather_rows(q, iq)), Mode::kTrain);
    auto loss = core::scale(
        core::add(core::mean(core::log_sigmoid(lp)), core::mean(core::log_sigmoid(core::scale(lq, -1.0)))), -1.0);
    tape.backward(loss);
    core::adam_step(net.params(), adam);
  }
  return net;
}

Complexity complexity_from_parts(std::span<const double> per_sample_kl, std::span<const double> d_on_posterior) {
  if (per_sample_kl.empty()) throw ConfigError("complexity estimate needs at least one example");
  Complexity c;
  c.kl_upper = std::accumulate(per_sample_kl.begin(), per_sample_kl.end(), 0.0) /
               static_cast<double>(per_sample_kl.size());
  const auto dr = density_ratio_kl(d_on_posterior);
  c.correction = dr.value;
  c.clamped = dr.clamped;
  c.corrected = c.kl_upper - c.correction;
  return c;
}

std::vector<std::size_t> all_indices(const data::LabeledDataset& ds, std::size_t limit) {
  std::vector<std::size_t> idx(limit == 0 ? ds.size() : std::min(limit, ds.size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

gauss::DiagonalGaussian posterior_of(const models::ModelBundle& bundle, const data::LabeledDataset& ds,
                                     std::span<const std::size_t> indices, std::size_t chunk) {
  if (indices.empty()) throw ConfigError("posterior of an empty selection");
  const std::size_t dz = bundle.dims().d_z;
  gauss::DiagonalGaussian out{Tensor({indices.size(), dz}), Tensor({indices.size(), dz})};
  for (std::size_t b = 0; b < indices.size(); b += chunk) {
    const std::size_t e = std::min(indices.size(), b + chunk);
    const auto g = bundle.posterior(ds.features(indices.subspan(b, e - b)));
    std::copy(g.mu.data(), g.mu.data() + g.mu.size(), out.mu.data() + b * dz);
    std::copy(g.sigma.data(), g.sigma.data() + g.sigma.size(), out.sigma.data() + b * dz);
  }
  return out;
}

Complexity complexity_estimate(const models::ModelBundle& bundle, const data::LabeledDataset& split,
                               std::uint64_t eval_seed, std::size_t limit) {
  const auto idx = all_indices(split, limit);
  const auto post = posterior_of(bundle, split, idx);
  Rng rng(eval_seed);
  const Tensor z = gauss::reparam_sample(post, rng.normal_tensor(post.mu.shape()));
  const auto kl = gauss::kl_per_example(post);
  Tensor d({z.rows(), 1});
  for (std::size_t b = 0; b < z.rows(); b += 4096) {
    const std::size_t e = std::min(z.rows(), b + 4096);
    const Tensor part = bundle.discriminate_latent(core::slice_rows(z, b, e));
    std::copy(part.data(), part.data() + part.size(), d.data() + b);
  }
  return complexity_from_parts(kl, d.values());
}

AttackResult train_adversary(const models::Stack& stack, const gauss::DiagonalGaussian& train_post,
                             std::span<const std::size_t> train_labels, const gauss::DiagonalGaussian& test_post,
                             std::span<const std::size_t> test_labels, std::size_t classes,
                             const AttackConfig& config) {
  if (!(config.data_ratio > 0.0 && config.data_ratio <= 1.0)) throw ConfigError("data ratio must lie in (0, 1]");
  if (config.batch == 0) throw ConfigError("adversary batch size must be positive");
  train_post.validate();
  test_post.validate();
  if (train_post.count() != train_labels.size() || test_post.count() != test_labels.size() || test_labels.empty()) {
    throw ConfigError("adversary posterior and label counts differ");
  }
  const std::size_t dz = train_post.dim();
  AttackResult result;
  result.adversary = core::Network("adversary", {dz}, stack, core::derive_seed(config.seed, 1));
  if (result.adversary.output_size() != classes) throw ConfigError("adversary must emit one probability per class");

  Rng rng(core::derive_seed(config.seed, 2));
  std::vector<std::size_t> perm(train_labels.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  const auto k = static_cast<std::size_t>(std::ceil(config.data_ratio * static_cast<double>(perm.size())));
  perm.resize(std::max<std::size_t>(1, std::min(k, perm.size())));
  result.train_examples = perm.size();
  std::vector<bool> seen(classes, false);
  for (auto i : perm) seen[train_labels[i]] = true;
  for (std::size_t c = 0; c < classes; ++c) {
    if (!seen[c]) result.warnings.push_back("class " + std::to_string(c) + " absent from adversary training data");
  }

  auto& net = result.adversary;
  const core::AdamConfig adam{config.lr};
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    for (std::size_t b = 0; b < perm.size(); b += config.batch) {
      const std::size_t e = std::min(perm.size(), b + config.batch);
      const std::span<const std::size_t> sel(perm.data() + b, e - b);
      Tensor z({sel.size(), dz});
      std::vector<std::size_t> y(sel.size());
      for (std::size_t r = 0; r < sel.size(); ++r) {
        for (std::size_t j = 0; j < dz; ++j) {
          z.at(r, j) = train_post.mu.at(sel[r], j) + train_post.sigma.at(sel[r], j) * rng.normal();
        }
        y[r] = train_labels[sel[r]];
      }
      net.params().zero_grad();
      Tape tape;
      auto logits = net.forward_logits(tape, tape.constant(z), Mode::kTrain);
      auto loss = core::scale(core::mean(core::pick(core::log_softmax(logits), y)), -1.0);
      if (!std::isfinite(loss.value()[0])) throw NonFiniteError("adversary loss became non-finite");
      tape.backward(loss);
      core::adam_step(net.params(), adam);
    }
  }

  Rng eval_rng(core::derive_seed(config.seed, 3));
  const Tensor z_test = gauss::reparam_sample(test_post, eval_rng.normal_tensor(test_post.mu.shape()));
  const Tensor probs = predict_chunked(net, z_test);
  result.accuracy = models::accuracy(probs, test_labels);
  double xent = 0.0;
  for (std::size_t r = 0; r < probs.rows(); ++r) xent -= std::log(std::max(probs.at(r, test_labels[r]), 1e-12));
  result.xent = xent / static_cast<double>(probs.rows());
  return result;
}

AttackResult train_adversary(const models::ModelBundle& bundle, const data::LabeledDataset& train,
                             const data::LabeledDataset& test, const AttackConfig& config) {
  const auto train_idx = all_indices(train);
  const auto test_idx = all_indices(test);
  const auto train_post = posterior_of(bundle, train, train_idx);
  const auto test_post = posterior_of(bundle, test, test_idx);
  return train_adversary(bundle.arch().adversary, train_post, train.s_labels(train_idx), test_post,
                         test.s_labels(test_idx), bundle.dims().s_classes, config);
}

namespace {

double log_mean_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s / static_cast<double>(v.size()));
}

bool rows_identical(const Tensor& a) {
  for (std::size_t r = 1; r < a.rows(); ++r) {
    const auto x = a.row_span(r);
    const auto y = a.row_span(0);
    if (!std::equal(x.begin(), x.end(), y.begin())) return false;
  }
  return true;
}

}  // namespace

MiEstimate mine_estimate(const Tensor& z, const Tensor& a, const MineConfig& config, const models::Stack& stack) {
  if (z.rows() != a.rows()) throw ConfigError("MINE needs paired samples of equal count");
  if (z.rows() < 2) throw ConfigError("MINE needs at least two samples");
  if (!(config.holdout > 0.0 && config.holdout < 1.0) || config.batch == 0 || config.eval_shuffles == 0) {
    throw ConfigError("invalid MINE configuration");
  }
  MiEstimate est;
  est.tag = EstimatorTag::kMine;
  est.samples = z.rows();
  if (rows_identical(a)) {
    est.warnings.push_back("attribute takes a single value; mutual information is zero");
    return est;
  }
  const std::size_t n = z.rows();
  const std::size_t dz = z.cols(), da = a.cols();
  Rng rng(core::derive_seed(config.seed, 11));
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  const auto n_hold = std::clamp<std::size_t>(static_cast<std::size_t>(std::round(config.holdout * static_cast<double>(n))),
                                              1, n - 1);
  const std::vector<std::size_t> hold(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_hold));
  const std::vector<std::size_t> fit(perm.begin() + static_cast<std::ptrdiff_t>(n_hold), perm.end());
  const Tensor z_fit = core::gather_rows(z.reshaped({n, dz}), fit);
  const Tensor a_fit = core::gather_rows(a.reshaped({n, da}), fit);

  models::MineNet mine(stack, dz, da, core::derive_seed(config.seed, 12));
  const core::AdamConfig adam{config.lr};
  const std::size_t m = std::min(config.batch, fit.size());
  std::vector<std::size_t> joint_idx(m), marg_idx(m);
  double log_ma = 0.0;
  bool ma_ready = false;
  for (std::size_t step = 0; step < config.steps; ++step) {
    for (std::size_t i = 0; i < m; ++i) {
      joint_idx[i] = rng.index(fit.size());
      marg_idx[i] = rng.index(fit.size());
    }
    const Tensor zb = core::gather_rows(z_fit, joint_idx);
    const Tensor ab = core::gather_rows(a_fit, joint_idx);
    const Tensor am = core::gather_rows(a_fit, marg_idx);
    mine.net().params().zero_grad();
    Tape tape;
    auto zv = tape.constant(zb);
    auto tj = mine.statistic(tape, zv, tape.constant(ab));
    auto tm = mine.statistic(tape, zv, tape.constant(am));
    const double lme = log_mean_exp(tm.value().values());
    if (!std::isfinite(lme)) throw NonFiniteError("MINE statistic became non-finite at step " + std::to_string(step));
    // Moving average of mean exp(T) on the marginal batch, kept in log space.
    if (!ma_ready) {
      log_ma = lme;
      ma_ready = true;
    } else {
      const double x = std::log(config.ema) + log_ma;
      const double y = std::log1p(-config.ema) + lme;
      const double hi = std::max(x, y);
      log_ma = hi + std::log(std::exp(x - hi) + std::exp(y - hi));
    }
    auto surrogate = core::sub(core::mean(core::exp(core::add_scalar(tm, -log_ma))), core::mean(tj));
    tape.backward(surrogate);
    core::adam_step(mine.net().params(), adam);
  }
  est.steps = config.steps;

  // Held-out Donsker-Varadhan bound.
  const Tensor zh = core::gather_rows(z.reshaped({n, dz}), hold);
  const Tensor ah = core::gather_rows(a.reshaped({n, da}), hold);
  auto eval = [&](const Tensor& zz, const Tensor& aa) {
    Tape tape(false);
    return mine.statistic(tape, tape.constant(zz), tape.constant(aa)).value();
  };
  const Tensor tj = eval(zh, ah);
  std::vector<double> tm_all;
  std::vector<std::size_t> shuffled(n_hold);
  std::iota(shuffled.begin(), shuffled.end(), std::size_t{0});
  for (std::size_t k = 0; k < config.eval_shuffles; ++k) {
    std::shuffle(shuffled.begin(), shuffled.end(), rng.engine());
    const Tensor tm = eval(zh, core::gather_rows(ah, shuffled));
    tm_all.insert(tm_all.end(), tm.values().begin(), tm.values().end());
  }
  const double mean_tj = std::accumulate(tj.values().begin(), tj.values().end(), 0.0) / static_cast<double>(tj.size());
  est.value = mean_tj - log_mean_exp(tm_all);
  return est;
}

}  // namespace varleak::leakage
