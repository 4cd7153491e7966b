// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "varleak/error.hpp"
#include "varleak/core/adam.hpp"
#include "varleak/leakage/estimators.hpp"
#include "varleak/train/trainer.hpp"

using namespace varleak;
using namespace varleak::train;
using core::Mode;
using core::Rng;
using core::Tape;
using core::Tensor;

namespace {

// Two linearly separable classes on a 1x2x2 "image"; s is independent noise.
data::LabeledDataset separable_toy(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  data::LabeledDataset ds;
  ds.height = 2;
  ds.width = 2;
  ds.channels = 1;
  ds.u_classes = 2;
  ds.s_classes = 2;
  for (std::size_t i = 0; i < n; ++i) {
    const auto u = static_cast<std::uint8_t>(rng.index(2));
    for (int p = 0; p < 4; ++p) {
      const bool hot = (p < 2) == (u == 0);
      ds.pixels.push_back(static_cast<std::uint8_t>(hot ? 180 + rng.index(60) : rng.index(60)));
    }
    ds.u.push_back(u);
    ds.s.push_back(static_cast<std::uint8_t>(rng.index(2)));
  }
  return ds;
}

TrainConfig toy_config(double beta) {
  TrainConfig c;
  c.arch = "desk-mlp";
  c.beta = beta;
  c.d_z = 2;
  c.batch = 64;
  c.iterations = 6;
  c.lr = 1e-3;
  c.warmup = {0.01, 30, 128, std::nullopt};
  c.eval_every = 3;
  return c;
}

std::vector<core::ParamSet> snapshot(models::ModelBundle& b) {
  std::vector<core::ParamSet> out;
  for (const auto& group : {b.phi(), b.theta(), b.eta(), b.omega()}) {
    for (auto* s : group) out.push_back(*s);
  }
  return out;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(TrainConfig, PaperPresets) {
  const auto ref = train_preset("mnist-ref");
  EXPECT_EQ(ref.batch, 2048u);
  EXPECT_EQ(ref.iterations, 500u);
  EXPECT_DOUBLE_EQ(ref.lr, 1e-4);
  EXPECT_DOUBLE_EQ(ref.block1_lr(), 5e-4);
  EXPECT_DOUBLE_EQ(ref.warmup.lr, 0.005);
  EXPECT_EQ(ref.warmup.iterations, 50u);
  EXPECT_EQ(ref.warmup.batch, 1024u);
  const auto celeba = train_preset("celeba-ref");
  EXPECT_DOUBLE_EQ(celeba.lr, 1e-5);
  EXPECT_EQ(celeba.batch, 1024u);
  EXPECT_EQ(celeba.warmup.batch, 512u);
  EXPECT_THROW(train_preset("nope"), ConfigError);
}

TEST(TrainConfig, ValidationAndJsonRoundTrip) {
  auto c = train_preset("mnist-desk");
  c.validate();
  c.beta = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c.beta = 0.2;
  c.batch = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.batch = 32;
  c.warmup.beta = 0.0;
  c.seed = 99;
  const auto back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.warmup, c.warmup);
  EXPECT_THROW(config_from_json(nlohmann::json{{"beta", "high"}}), ConfigError);
}

TEST(BatchSampler, EachPassCoversEveryIndexOnce) {
  BatchSampler s(10, 3);
  std::vector<int> seen(10, 0);
  for (int i = 0; i < 5; ++i) {
    for (auto idx : s.next(2)) ++seen[idx];
  }
  EXPECT_EQ(seen, std::vector<int>(10, 1));
  EXPECT_EQ(s.next(50).size(), 10u);
}

TEST(Block1, ZeroBetaIsPlainCrossEntropy) {
  const auto ds = separable_toy(32, 1);
  auto bundle = make_bundle(toy_config(0.0), ds);
  const auto idx = std::vector<std::size_t>{0, 3, 5, 7, 11, 20};
  Rng rng(2);
  const Tensor eps = rng.normal_tensor({idx.size(), 2});
  const Tensor x = ds.features(idx);
  const auto u = ds.u_labels(idx);

  Tape tape;
  const auto l = loss_block1(tape, bundle, x, u, eps, 0.0, Mode::kTrainFrozenStats);

  Tape ref;
  const auto enc = bundle.encode(ref, ref.constant(x), eps, Mode::kTrainFrozenStats);
  const Tensor logits = bundle.decode_utility_logits(ref, enc.z, Mode::kTrainFrozenStats).value();
  double ce = 0.0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto row = logits.row_span(i);
    const double m = std::max(row[0], row[1]);
    ce -= row[u[i]] - (m + std::log(std::exp(row[0] - m) + std::exp(row[1] - m)));
  }
  ce /= static_cast<double>(idx.size());
  EXPECT_NEAR(l.loss.value()[0], ce, 1e-14);
  EXPECT_EQ(l.floored, 0u);
}

TEST(Block1, UniformDecoderGivesLogTenAndFreshHeadsGiveZeroKl) {
  data::LabeledDataset ds;
  ds.height = ds.width = 2;
  ds.channels = 1;
  ds.u_classes = 10;
  ds.s_classes = 2;
  for (int i = 0; i < 10; ++i) {
    for (int p = 0; p < 4; ++p) ds.pixels.push_back(static_cast<std::uint8_t>(25 * i + p));
    ds.u.push_back(static_cast<std::uint8_t>(i));
    ds.s.push_back(static_cast<std::uint8_t>(i % 2));
  }
  auto bundle = make_bundle(toy_config(0.7), ds);
  bundle.decoder().zero_last_affine();
  const auto idx = leakage::all_indices(ds);
  Rng rng(3);
  Tape tape;
  const auto l = loss_block1(tape, bundle, ds.features(idx), ds.u_labels(idx), rng.normal_tensor({10, 2}), 0.7,
                             Mode::kTrainFrozenStats);
  EXPECT_NEAR(l.nll, std::log(10.0), 1e-12);
  EXPECT_EQ(l.kl, 0.0);
  EXPECT_NEAR(l.loss.value()[0], std::log(10.0), 1e-12);
}

TEST(Block2, UninformedDiscriminatorGivesTwoBetaLogTwo) {
  const auto ds = separable_toy(16, 4);
  auto bundle = make_bundle(toy_config(0.3), ds);
  Rng rng(5);
  for (double beta : {0.0, 0.3, 1.0}) {
    Tape tape;
    const Var loss = loss_block2(tape, bundle, rng.normal_tensor({8, 2}), rng.normal_tensor({8, 2}), beta,
                                 Mode::kTrainFrozenStats);
    EXPECT_NEAR(loss.value()[0], 2.0 * beta * std::numbers::ln2, 1e-14);
  }
}

TEST(Block2, SmallStepDescendsOnAFixedBatch) {
  const auto ds = separable_toy(16, 6);
  int descended = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    auto cfg = toy_config(0.5);
    cfg.seed = trial;
    auto bundle = make_bundle(cfg, ds);
    Rng rng(1000 + trial);
    Tensor z = rng.normal_tensor({32, 2});
    for (auto& v : z.values()) v += 1.0;
    const Tensor prior = rng.normal_tensor({32, 2});
    double before = 0.0;
    {
      Tape tape;
      const Var loss = loss_block2(tape, bundle, z, prior, 0.5, Mode::kTrainFrozenStats);
      before = loss.value()[0];
      for (auto* s : bundle.eta()) s->zero_grad();
      tape.backward(loss);
    }
    for (auto* s : bundle.eta()) core::adam_step(*s, {1e-4});
    Tape tape;
    if (loss_block2(tape, bundle, z, prior, 0.5, Mode::kTrainFrozenStats).value()[0] < before) ++descended;
  }
  EXPECT_GE(descended, 95);
}

TEST(Blocks, EachBlockTouchesOnlyItsParameters) {
  const auto ds = separable_toy(200, 7);
  const auto cfg = toy_config(0.2);
  TrainState state(make_bundle(cfg, ds), ds.size(), cfg.seed);
  const gauss::PriorSpec prior{cfg.d_z};
  // Index ranges into snapshot(): phi = 0..2, theta = 3, eta = 4, omega = 5.
  const std::vector<std::vector<std::size_t>> named{{0, 1, 2, 3}, {4}, {0, 1, 2}, {5}, {3}};
  for (int iter = 0; iter < 3; ++iter) {
    for (int k = 1; k <= 5; ++k) {
      const auto before = snapshot(state.bundle);
      run_block(state, k, ds, prior, cfg);
      const auto after = snapshot(state.bundle);
      for (std::size_t i = 0; i < before.size(); ++i) {
        const bool is_named = std::find(named[k - 1].begin(), named[k - 1].end(), i) != named[k - 1].end();
        if (!is_named) EXPECT_TRUE(before[i].same_values(after[i])) << "block " << k << " changed set " << i;
      }
    }
  }
  // Blocks 1 and 2 must actually move their targets.
  const auto before = snapshot(state.bundle);
  run_block(state, 2, ds, prior, cfg);
  EXPECT_FALSE(before[4].same_values(snapshot(state.bundle)[4]));
}

TEST(Blocks, ZeroBetaLeavesLatentDiscriminatorAlone) {
  const auto ds = separable_toy(200, 8);
  const auto cfg = toy_config(0.0);
  TrainState state(make_bundle(cfg, ds), ds.size(), cfg.seed);
  const core::ParamSet eta = *state.bundle.eta()[0];
  for (int i = 0; i < 3; ++i) train_iteration(state, ds, {cfg.d_z}, cfg);
  EXPECT_TRUE(eta.same_values(*state.bundle.eta()[0]));
  for (const auto& l : state.losses) {
    EXPECT_EQ(l[1], 0.0);
    EXPECT_EQ(l[2], 0.0);
    EXPECT_NE(l[3], 0.0);
  }
  EXPECT_EQ(state.iteration, 3u);
}

TEST(Blocks, NonFiniteLossNamesTheBlock) {
  const auto ds = separable_toy(50, 9);
  const auto cfg = toy_config(0.2);
  TrainState state(make_bundle(cfg, ds), ds.size(), cfg.seed);
  state.bundle.latent_disc().params().begin()->value[0] = std::nan("");
  EXPECT_NO_THROW(run_block(state, 1, ds, {cfg.d_z}, cfg));
  try {
    run_block(state, 2, ds, {cfg.d_z}, cfg);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("block 2"), std::string::npos);
  }
  EXPECT_THROW(run_block(state, 6, ds, {cfg.d_z}, cfg), ConfigError);
}

TEST(Pretrain, SeparableToyIsLearned) {
  const auto ds = separable_toy(1000, 10);
  auto cfg = toy_config(0.001);
  auto bundle = make_bundle(cfg, ds);
  pretrain(bundle, ds, cfg);
  EXPECT_GE(utility_accuracy(bundle, ds, 11), 0.99);
}

TEST(Pretrain, ZeroIterationsLeavesBundleUnchanged) {
  const auto ds = separable_toy(100, 12);
  auto cfg = toy_config(0.1);
  cfg.warmup.iterations = 0;
  auto bundle = make_bundle(cfg, ds);
  const auto before = snapshot(bundle);
  pretrain(bundle, ds, cfg);
  const auto after = snapshot(bundle);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_TRUE(before[i].same_values(after[i]));
}

TEST(Train, HistoryCsvAndCheckpointsAreDeterministic) {
  const auto ds = separable_toy(600, 13);
  auto cfg = toy_config(0.05);
  cfg.checkpoint_every = 3;
  const auto dir = std::filesystem::temp_directory_path() / "varleak_train_test";
  std::filesystem::remove_all(dir);
  std::vector<TrainResult> results;
  for (const char* run : {"a", "b"}) {
    TrainOutputs out{dir / run / "metrics.csv", dir / run / "ckpt", false};
    std::filesystem::create_directories(dir / run);
    results.push_back(train::train(cfg, ds, out));
  }
  EXPECT_EQ(results[0].iterations_run, 6u);
  ASSERT_EQ(results[0].metrics.size(), 3u);  // iterations 0, 3, 6
  EXPECT_EQ(slurp(dir / "a/metrics.csv"), slurp(dir / "b/metrics.csv"));
  for (const char* f : {"iter_000003.vlmb", "iter_000006.vlmb"}) {
    ASSERT_TRUE(std::filesystem::exists(dir / "a/ckpt" / f));
    EXPECT_EQ(slurp(dir / "a/ckpt" / f), slurp(dir / "b/ckpt" / f));
  }
  std::istringstream csv(slurp(dir / "a/metrics.csv"));
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, kMetricsHeader);
  std::filesystem::remove_all(dir);
}

TEST(Train, EarlyStopOnPlateau) {
  const auto ds = separable_toy(300, 14);
  auto cfg = toy_config(0.0);
  cfg.iterations = 100;
  cfg.eval_every = 1;
  cfg.patience = 2;
  cfg.lr = 1e-12;
  cfg.block1_lr_factor = 1.0;
  const auto r = train::train(cfg, ds);
  EXPECT_TRUE(r.early_stopped);
  EXPECT_LT(r.iterations_run, 100u);
  EXPECT_EQ(r.metrics.size(), r.iterations_run + 1);
}

TEST(Train, RejectsInvalidInputs) {
  auto cfg = toy_config(0.1);
  cfg.beta = -0.1;
  EXPECT_THROW(train::train(cfg, separable_toy(100, 15)), ConfigError);
  data::SplitResult empty;
  EXPECT_THROW(train::train(toy_config(0.1), empty), ConfigError);
}
