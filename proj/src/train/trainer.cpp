// SPDX-License-Identifier: Apache-2.0
#include "varleak/train/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>

#include "varleak/core/adam.hpp"
#include "varleak/error.hpp"
#include "varleak/leakage/estimators.hpp"

namespace varleak::train {

using core::Mode;
using core::Rng;
using core::Tape;
using models::ModelBundle;

namespace {

// Stream ids for derive_seed.
constexpr std::uint64_t kBundleStream = 0xB0;
constexpr std::uint64_t kLoopStream = 0x100;
constexpr std::uint64_t kSamplerStream = 0x101;
constexpr std::uint64_t kWarmupStream = 0x102;
constexpr std::uint64_t kEvalStream = 0x103;

void zero_grad(ModelBundle& b) {
  for (auto* s : b.phi()) s->zero_grad();
  for (auto* s : b.theta()) s->zero_grad();
  for (auto* s : b.eta()) s->zero_grad();
  for (auto* s : b.omega()) s->zero_grad();
}

void step(const std::vector<core::ParamSet*>& sets, double lr, int block) {
  const core::AdamConfig adam{lr};
  for (auto* s : sets) {
    try {
      core::adam_step(*s, adam);
    } catch (const NonFiniteError& e) {
      throw NonFiniteError("block " + std::to_string(block) + ": " + e.what());
    }
  }
}

std::vector<core::ParamSet*> join(std::vector<core::ParamSet*> a, const std::vector<core::ParamSet*>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

double checked(Var loss, int block, std::size_t iteration) {
  const double v = loss.value()[0];
  if (!std::isfinite(v)) {
    throw NonFiniteError("block " + std::to_string(block) + " loss is not finite at iteration " +
                         std::to_string(iteration));
  }
  return v;
}

models::ArchConfig strip_batch_norm(models::ArchConfig arch) {
  for (auto* stack : {&arch.encoder_trunk, &arch.decoder, &arch.latent_disc, &arch.attr_disc, &arch.adversary}) {
    std::erase_if(*stack, [](const core::LayerSpec& l) { return l.kind == core::LayerKind::kBatchNorm; });
  }
  return arch;
}

Tensor prior_sample(const gauss::PriorSpec& prior, std::size_t n, Rng& rng) { return prior.sample(n, rng); }

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

BatchSampler::BatchSampler(std::size_t n, std::uint64_t seed) : order_(n), cursor_(n), rng_(seed) {
  if (n == 0) throw ConfigError("cannot sample batches from an empty dataset");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
}

std::vector<std::size_t> BatchSampler::next(std::size_t m) {
  m = std::min(m, order_.size());
  if (cursor_ + m > order_.size()) {
    std::shuffle(order_.begin(), order_.end(), rng_.engine());
    cursor_ = 0;
  }
  std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + m));
  cursor_ += m;
  std::sort(out.begin(), out.end());
  return out;
}

Block1Loss loss_block1(Tape& tape, ModelBundle& bundle, const Tensor& x, std::span<const std::size_t> u,
                       const Tensor& eps, double beta, Mode mode) {
  if (x.rows() != u.size() || x.rows() == 0) throw ConfigError("block 1: batch of inputs and labels differ in size");
  const auto enc = bundle.encode(tape, tape.constant(x), eps, mode);
  Var logp = core::pick(core::log_softmax(bundle.decode_utility_logits(tape, enc.z, mode)), u);
  Block1Loss out;
  const double floor = std::log(kNllFloor);
  for (double v : logp.value().values()) out.floored += v < floor ? 1 : 0;
  Var nll = core::scale(core::mean(core::clamp(logp, floor, 0.0)), -1.0);
  Var kl = core::mean(gauss::kl_to_standard_normal(enc.mu, enc.log_sigma));
  out.nll = nll.value()[0];
  out.kl = kl.value()[0];
  out.loss = beta == 0.0 ? nll : core::add(nll, core::scale(kl, beta));
  return out;
}

Var loss_block2(Tape& tape, ModelBundle& bundle, const Tensor& z, const Tensor& z_prior, double beta, Mode mode) {
  const std::size_t m = z.rows();
  Var a = bundle.discriminate_latent_logits(tape, core::concat_rows(tape.constant(z), tape.constant(z_prior)), mode);
  std::vector<double> w(a.value().size());
  // Real rows on +a, prior rows on -a, each half averaged separately.
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = i < m ? 1.0 : -1.0;
  Var signed_a = core::mul(a, tape.constant(Tensor(a.shape(), w)));
  Var ls = core::log_sigmoid(signed_a);
  std::vector<double> weights(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    weights[i] = i < m ? 1.0 / static_cast<double>(m) : 1.0 / static_cast<double>(z_prior.rows());
  }
  Var total = core::sum(core::mul(ls, tape.constant(Tensor(ls.shape(), weights))));
  return core::scale(total, -beta);
}

Var loss_block4(Tape& tape, ModelBundle& bundle, const Tensor& u_real, const Tensor& u_fake, Mode mode) {
  const std::size_t m = u_real.rows();
  Var a = bundle.discriminate_attribute_logits(
      tape, core::concat_rows(tape.constant(u_real), tape.constant(u_fake)), mode);
  std::vector<double> sign(a.value().size()), weights(a.value().size());
  for (std::size_t i = 0; i < sign.size(); ++i) {
    sign[i] = i < m ? 1.0 : -1.0;
    weights[i] = 1.0 / static_cast<double>(i < m ? m : u_fake.rows());
  }
  Var ls = core::log_sigmoid(core::mul(a, tape.constant(Tensor(a.shape(), sign))));
  return core::scale(core::sum(core::mul(ls, tape.constant(Tensor(ls.shape(), weights)))), -1.0);
}

Var gumbel_softmax(Tape& tape, Var logits, double temperature, Rng& rng) {
  Tensor g(logits.shape());
  for (auto& v : g.values()) {
    double r = rng.uniform();
    while (r <= 0.0) r = rng.uniform();
    v = -std::log(-std::log(r));
  }
  Var noisy = core::add(core::log_softmax(logits), tape.constant(std::move(g)));
  return core::softmax(core::scale(noisy, 1.0 / temperature));
}

std::size_t pretrain(ModelBundle& bundle, const data::LabeledDataset& train, const TrainConfig& config) {
  if (train.size() == 0) throw ConfigError("pretrain: empty training split");
  if (config.warmup.iterations == 0) return 0;
  Rng rng(core::derive_seed(config.seed, kWarmupStream));
  BatchSampler sampler(train.size(), rng.next());
  const auto params = join(bundle.phi(), bundle.theta());
  std::size_t floored = 0;
  for (std::size_t it = 0; it < config.warmup.iterations; ++it) {
    const auto idx = sampler.next(config.warmup.batch);
    const Tensor eps = rng.normal_tensor({idx.size(), bundle.dims().d_z});
    Tape tape;
    const auto l = loss_block1(tape, bundle, train.features(idx), train.u_labels(idx), eps, config.warmup_beta(),
                               Mode::kTrain);
    if (!std::isfinite(l.loss.value()[0])) {
      throw NonFiniteError("warm-up loss is not finite at iteration " + std::to_string(it));
    }
    floored += l.floored;
    zero_grad(bundle);
    tape.backward(l.loss);
    step(params, config.warmup.lr, 1);
  }
  return floored;
}

TrainState::TrainState(ModelBundle b, std::size_t train_size, std::uint64_t seed)
    : bundle(std::move(b)),
      rng(core::derive_seed(seed, kLoopStream)),
      sampler(train_size, core::derive_seed(seed, kSamplerStream)) {}

ModelBundle make_bundle(const TrainConfig& config, const data::LabeledDataset& ds) {
  auto arch = models::make_preset(config.arch, config.d_z, ds.u_classes, ds.s_classes);
  if (!config.batch_norm) arch = strip_batch_norm(std::move(arch));
  return ModelBundle(std::move(arch), {ds.input_shape(), config.d_z, ds.u_classes, ds.s_classes},
                     core::derive_seed(config.seed, kBundleStream));
}

double run_block(TrainState& state, int block, const data::LabeledDataset& train, const gauss::PriorSpec& prior,
                 const TrainConfig& config) {
  ModelBundle& b = state.bundle;
  Rng& rng = state.rng;
  const std::size_t dz = b.dims().d_z;
  const double beta = config.beta;
  Tape tape;
  Var loss;
  std::vector<core::ParamSet*> targets;
  double lr = config.lr;

  switch (block) {
    case 1: {
      const auto idx = state.sampler.next(config.batch);
      const Tensor eps = rng.normal_tensor({idx.size(), dz});
      const auto l = loss_block1(tape, b, train.features(idx), train.u_labels(idx), eps, beta, Mode::kTrain);
      state.floored += l.floored;
      loss = l.loss;
      targets = join(b.phi(), b.theta());
      lr = config.block1_lr();
      break;
    }
    case 2: {
      const auto idx = state.sampler.next(config.batch);
      const Tensor eps = rng.normal_tensor({idx.size(), dz});
      Tensor z;
      {
        Tape enc_tape(false);
        z = b.encode(enc_tape, enc_tape.constant(train.features(idx)), eps, Mode::kTrainFrozenStats).z.value();
      }
      loss = loss_block2(tape, b, z, prior_sample(prior, idx.size(), rng), beta, Mode::kTrain);
      targets = b.eta();
      break;
    }
    case 3: {
      const auto idx = state.sampler.next(config.batch);
      const Tensor eps = rng.normal_tensor({idx.size(), dz});
      const auto enc = b.encode(tape, tape.constant(train.features(idx)), eps, Mode::kTrainFrozenStats);
      Var a = b.discriminate_latent_logits(tape, enc.z, Mode::kTrainFrozenStats);
      loss = core::scale(core::mean(core::log_sigmoid(a)), beta);
      targets = b.phi();
      break;
    }
    case 4: {
      const auto idx = state.sampler.next(config.batch);
      const Tensor real = models::one_hot(train.u_labels(idx), b.dims().u_classes);
      Tensor fake;
      {
        Tape gen(false);
        Var logits = b.decode_utility_logits(gen, gen.constant(prior_sample(prior, idx.size(), rng)),
                                             Mode::kTrainFrozenStats);
        fake = gumbel_softmax(gen, logits, config.gumbel_temperature, rng).value();
      }
      loss = loss_block4(tape, b, real, fake, Mode::kTrain);
      targets = b.omega();
      break;
    }
    case 5: {
      Var logits = b.decode_utility_logits(tape, tape.constant(prior_sample(prior, std::min(config.batch, train.size()), rng)),
                                           Mode::kTrainFrozenStats);
      Var fake = gumbel_softmax(tape, logits, config.gumbel_temperature, rng);
      Var a = b.discriminate_attribute_logits(tape, fake, Mode::kTrainFrozenStats);
      loss = core::mean(core::log_sigmoid(core::scale(a, -1.0)));
      targets = b.theta();
      break;
    }
    default:
      throw ConfigError("block id must be 1..5, got " + std::to_string(block));
  }
  const double value = checked(loss, block, state.iteration);
  zero_grad(b);
  tape.backward(loss);
  step(targets, lr, block);
  return value;
}

void train_iteration(TrainState& state, const data::LabeledDataset& train, const gauss::PriorSpec& prior,
                     const TrainConfig& config) {
  if (prior.dim != state.bundle.dims().d_z) throw ConfigError("prior dimension differs from d_z");
  BlockLosses losses{};
  for (int k = 1; k <= static_cast<int>(kBlockCount); ++k) {
    if (config.beta == 0.0 && (k == 2 || k == 3)) continue;
    losses[k - 1] = run_block(state, k, train, prior, config);
  }
  state.losses.push_back(losses);
  ++state.iteration;
}

double utility_accuracy(const ModelBundle& bundle, const data::LabeledDataset& split, std::uint64_t eval_seed,
                        std::size_t limit) {
  const auto idx = leakage::all_indices(split, limit);
  const auto post = leakage::posterior_of(bundle, split, idx);
  Rng rng(eval_seed);
  const Tensor z = gauss::reparam_sample(post, rng.normal_tensor(post.mu.shape()));
  return models::accuracy(bundle.decode_utility(z), split.u_labels(idx));
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricRow> rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::kIo, "cannot write " + path.string());
  out << kMetricsHeader << '\n';
  for (const auto& r : rows) {
    out << r.iter;
    for (double l : r.losses) out << ',' << format_double(l);
    for (double v : {r.util_acc_train, r.util_acc_val, r.util_acc_test, r.kl_upper, r.kl_correction}) {
      out << ',' << format_double(v);
    }
    out << '\n';
  }
  if (!out) throw FormatError(FormatError::Kind::kIo, "failed writing " + path.string());
}

namespace {

MetricRow evaluate(const TrainState& state, const data::SplitResult& splits, const TrainConfig& config) {
  const std::uint64_t seed = core::derive_seed(config.seed, kEvalStream);
  MetricRow row;
  row.iter = state.iteration;
  if (!state.losses.empty()) row.losses = state.losses.back();
  row.util_acc_train = utility_accuracy(state.bundle, splits.train, seed, config.eval_train_limit);
  row.util_acc_val = utility_accuracy(state.bundle, splits.val, seed);
  row.util_acc_test = utility_accuracy(state.bundle, splits.test, seed);
  const auto c = leakage::complexity_estimate(state.bundle, splits.val, seed);
  row.kl_upper = c.kl_upper;
  row.kl_correction = c.correction;
  return row;
}

TrainResult run(const TrainConfig& config, ModelBundle bundle, const data::SplitResult& splits,
                const TrainOutputs& outputs, std::size_t floored) {
  TrainState state(std::move(bundle), splits.train.size(), config.seed);
  state.floored = floored;
  const gauss::PriorSpec prior{config.d_z};
  if (outputs.checkpoint_dir) std::filesystem::create_directories(*outputs.checkpoint_dir);

  double best_val = -1.0;
  std::size_t stale = 0;
  bool stopped = false;
  auto record = [&] {
    state.metrics.push_back(evaluate(state, splits, config));
    if (outputs.metrics_csv) write_metrics_csv(*outputs.metrics_csv, state.metrics);
    const double val = state.metrics.back().util_acc_val;
    if (val > best_val) {
      best_val = val;
      stale = 0;
    } else {
      ++stale;
    }
    return config.patience > 0 && stale >= config.patience;
  };

  record();
  while (state.iteration < config.iterations) {
    train_iteration(state, splits.train, prior, config);
    if (outputs.checkpoint_dir && config.checkpoint_every > 0 && state.iteration % config.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "iter_%06zu.vlmb", state.iteration);
      state.bundle.save(*outputs.checkpoint_dir / name);
    }
    if (state.iteration % config.eval_every == 0 || state.iteration == config.iterations) {
      if (record()) {
        stopped = state.iteration < config.iterations;
        break;
      }
    }
  }
  return {std::move(state.bundle), std::move(state.metrics), state.iteration, stopped, state.floored};
}

void check_splits(const TrainConfig& config, const data::SplitResult& splits) {
  config.validate();
  for (const auto* s : {&splits.train, &splits.val, &splits.test}) {
    s->validate();
    if (s->size() == 0) throw ConfigError("train: every split must be non-empty");
  }
}

}  // namespace

TrainResult train(const TrainConfig& config, const data::SplitResult& splits, const TrainOutputs& outputs) {
  check_splits(config, splits);
  ModelBundle bundle = make_bundle(config, splits.train);
  const std::size_t floored = outputs.skip_pretrain ? 0 : pretrain(bundle, splits.train, config);
  return run(config, std::move(bundle), splits, outputs, floored);
}

TrainResult train(const TrainConfig& config, const data::LabeledDataset& dataset, const TrainOutputs& outputs) {
  config.validate();
  return train(config, data::split(dataset, config.split, config.split_seed), outputs);
}

TrainResult train(const TrainConfig& config, ModelBundle bundle, const data::SplitResult& splits,
                  const TrainOutputs& outputs) {
  check_splits(config, splits);
  if (bundle.dims().d_z != config.d_z) throw ConfigError("bundle d_z differs from the training config");
  return run(config, std::move(bundle), splits, outputs, 0);
}

}  // namespace varleak::train
