// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "../support/gradient_check.hpp"
#include "varleak/core/adam.hpp"
#include "varleak/core/layers.hpp"
#include "varleak/core/tape.hpp"
#include "varleak/error.hpp"

using namespace varleak;
using namespace varleak::core;

TEST(Forward, IdentityAffineLayer) {
  Network net("id", {3}, {LayerSpec::affine(3)}, 1);
  auto& w = net.params().get("0.fc.weight").value;
  w.fill(0.0);
  for (std::size_t i = 0; i < 3; ++i) w.at(i, i) = 1.0;
  const Tensor out = net.predict(Tensor::row({1, 2, 3}));
  EXPECT_EQ(out, Tensor::row({1, 2, 3}));
}

TEST(Forward, LeakyReluSlope) {
  Network net("lr", {2}, {LayerSpec::leaky_relu(0.2)}, 1);
  const Tensor out = net.predict(Tensor::row({-1, 2}));
  EXPECT_DOUBLE_EQ(out[0], -0.2);
  EXPECT_DOUBLE_EQ(out[1], 2.0);
}

TEST(Forward, SoftmaxOfZerosIsUniform) {
  Network net("sm", {3}, {LayerSpec::softmax()}, 1);
  const Tensor out = net.predict(Tensor::row({0, 0, 0}));
  for (double v : out.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Forward, SoftmaxRowsSumToOneAndSigmoidInOpenInterval) {
  Rng rng(5);
  Network sm("sm", {7}, {LayerSpec::affine(5), LayerSpec::softmax()}, 2);
  Network sg("sg", {7}, {LayerSpec::affine(5), LayerSpec::sigmoid()}, 3);
  const Tensor x = rng.normal_tensor({50, 7});
  const Tensor p = sm.predict(x);
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double s = 0.0;
    for (double v : p.row_span(r)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
  const Tensor q = sg.predict(x);
  for (double v : q.values()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Forward, ShapeMismatchNamesTheLayer) {
  Network net("enc", {4}, {LayerSpec::affine(2)}, 1);
  try {
    (void)net.predict(Tensor::row({1, 2, 3}));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 0 (FC(2))"), std::string::npos) << e.what();
  }
}

TEST(Forward, ConfigErrorForAffineOnSpatialInput) {
  EXPECT_THROW(Network("bad", {3, 4, 4}, {LayerSpec::affine(2)}, 1), ConfigError);
}

TEST(Forward, ConvOutputShapesFollowStrideAndPadding) {
  Network net("c", {3, 28, 28}, {LayerSpec::conv2d(64, 5, 2), LayerSpec::conv2d(128, 5, 2)}, 1);
  EXPECT_EQ(net.output_shape(), (Shape{128, 7, 7}));
}

TEST(Backward, LinearCaseGradientIsInput) {
  ParamSet ps;
  auto& w = ps.add("w", Tensor({1, 1}, 0.7));
  Tape tape;
  auto loss = sum(matmul(tape.constant(Tensor({1, 1}, 3.0)), tape.parameter(w)));
  tape.backward(loss);
  EXPECT_DOUBLE_EQ(w.grad[0], 3.0);
}

TEST(Backward, UnusedParameterHasZeroGradient) {
  ParamSet ps;
  auto& w = ps.add("w", Tensor({1, 1}, 0.7));
  auto& unused = ps.add("p", Tensor({2}, 5.0));
  unused.grad.fill(0.0);
  Tape tape;
  tape.backward(sum(matmul(tape.constant(Tensor({1, 1}, 3.0)), tape.parameter(w))));
  for (double g : unused.grad.values()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, WithoutRecordedForwardIsUsageError) {
  Tape tape;
  EXPECT_THROW(tape.backward(Var{}), UsageError);
  Tape other;
  auto v = other.constant(Tensor::scalar(1.0));
  EXPECT_THROW(tape.backward(v), UsageError);
  Tape eval(false);
  auto e = eval.constant(Tensor::scalar(1.0));
  EXPECT_THROW(eval.backward(e), UsageError);
}

TEST(Backward, RandomTwoLayerNetMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto probe = check::make_random_net(seed, 0);
    EXPECT_LE(check::max_gradient_error(probe), 1e-3) << probe.description;
  }
}

TEST(Backward, EveryLayerKindPassesGradientCheck) {
  for (std::size_t i = 0; i < 25; ++i) {
    auto probe = check::make_random_net(99, i);
    EXPECT_LE(probe.net.params().scalar_count(), 64u) << probe.description;
    EXPECT_LE(probe.net.layers().size(), 3u);
    EXPECT_LE(check::max_gradient_error(probe), 1e-3) << probe.description;
  }
}

TEST(Backward, CompositeOpsMatchFiniteDifferences) {
  // log_softmax + pick, log_sigmoid, log_mean_exp, clamp, exp, concat on one graph.
  Rng rng(11);
  ParamSet ps;
  auto& a = ps.add("a", rng.normal_tensor({4, 3}));
  auto& b = ps.add("b", rng.normal_tensor({4, 2}));
  const std::vector<std::size_t> labels{0, 2, 1, 2};
  auto build = [&](Tape& t) {
    auto av = t.parameter(a);
    auto bv = t.parameter(b);
    auto nll = mean(pick(log_softmax(av), labels));
    auto cat = concat_cols(av, exp(clamp(bv, -0.5, 0.8)));
    auto rows = concat_rows(cat, scale(cat, 0.5));
    return add(add(nll, mean(log_sigmoid(rows))), add(log_mean_exp(bv), mean(square(row_sum(cat)))));
  };
  ps.zero_grad();
  Tape tape;
  tape.backward(build(tape));
  auto numeric = check::numeric_gradients(ps, [&] {
    Tape t(false);
    return build(t).value()[0];
  });
  std::size_t k = 0;
  for (const auto& p : ps) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      EXPECT_LE(check::relative_error(p.grad[i], numeric[k][i]), 1e-6) << p.name << "[" << i << "]";
    }
    ++k;
  }
}

TEST(Backward, DeterministicAcrossRuns) {
  auto run = [] {
    auto probe = check::make_random_net(7, 3);
    probe.net.params().zero_grad();
    Tape tape;
    auto out = probe.net.forward(tape, tape.constant(probe.input), Mode::kTrain);
    tape.backward(sum(mul(out, tape.constant(probe.projection))));
    std::vector<double> flat;
    for (const auto& p : probe.net.params()) {
      flat.insert(flat.end(), p.value.values().begin(), p.value.values().end());
      flat.insert(flat.end(), p.grad.values().begin(), p.grad.values().end());
    }
    return flat;
  };
  EXPECT_EQ(run(), run());
}

TEST(BatchNorm, FrozenModesLeaveRunningStatisticsUntouched) {
  Rng rng(3);
  Network net("bn", {4}, {LayerSpec::affine(3), LayerSpec::batch_norm()}, 1);
  const Tensor x = rng.normal_tensor({8, 4});
  const Tensor before = net.params().get("1.bn.running_mean").value;
  for (auto mode : {Mode::kTrainFrozenStats, Mode::kEval}) {
    Tape tape(false);
    (void)net.forward(tape, tape.constant(x), mode);
  }
  EXPECT_EQ(net.params().get("1.bn.running_mean").value, before);
  Tape tape(false);
  (void)net.forward(tape, tape.constant(x), Mode::kTrain);
  EXPECT_FALSE(net.params().get("1.bn.running_mean").value == before);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamSet ps;
  auto& w = ps.add("w", Tensor({3}, 1.0));
  w.grad.fill(1.0);
  adam_step(ps, AdamConfig{0.01});
  for (double v : w.value.values()) EXPECT_NEAR(v, 1.0 - 0.01, 1e-9);
  EXPECT_EQ(w.steps, 1u);
}

TEST(Adam, ZeroGradientLeavesParametersButAdvancesStep) {
  ParamSet ps;
  auto& w = ps.add("w", Tensor({2}, 0.5));
  adam_step(ps, AdamConfig{0.01});
  EXPECT_EQ(w.value, Tensor({2}, 0.5));
  EXPECT_EQ(w.steps, 1u);
}

TEST(Adam, DescendsQuadratic) {
  // f(w) = w^2, gradient 2w.
  ParamSet ps;
  auto& w = ps.add("w", Tensor({1}, 1.0));
  for (int i = 0; i < 100; ++i) {
    w.grad[0] = 2.0 * w.value[0];
    adam_step(ps, AdamConfig{0.05});
  }
  EXPECT_LT(std::abs(w.value[0]), 0.1);
}

TEST(Adam, NonFiniteGradientAbortsAndNamesParameter) {
  ParamSet ps;
  auto& a = ps.add("enc.weight", Tensor({2}, 1.0));
  auto& b = ps.add("dec.weight", Tensor({2}, 1.0));
  a.grad.fill(0.5);
  b.grad[1] = std::nan("");
  try {
    adam_step(ps, AdamConfig{0.01});
    FAIL();
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("dec.weight"), std::string::npos);
  }
  EXPECT_EQ(a.value, Tensor({2}, 1.0));
  EXPECT_EQ(a.steps, 0u);
}
