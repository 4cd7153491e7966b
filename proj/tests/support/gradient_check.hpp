// SPDX-License-Identifier: Apache-2.0
// Finite-difference oracle shared by the unit and acceptance suites. It only
// calls forward evaluations, never Tape::backward.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "varleak/core/layers.hpp"
#include "varleak/core/rng.hpp"

namespace varleak::check {

/// Relative error with a small floor so components that are both ~0 compare
/// on an absolute scale.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central differences of `loss` with respect to every trainable scalar.
inline std::vector<core::Tensor> numeric_gradients(core::ParamSet& params, const std::function<double()>& loss,
                                                   double h = 1e-5) {
  std::vector<core::Tensor> out;
  for (auto& p : params) {
    core::Tensor g = core::Tensor::zeros_like(p.value);
    if (p.trainable) {
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double saved = p.value[i];
        p.value[i] = saved + h;
        const double up = loss();
        p.value[i] = saved - h;
        const double down = loss();
        p.value[i] = saved;
        g[i] = (up - down) / (2.0 * h);
      }
    }
    out.push_back(std::move(g));
  }
  return out;
}

struct RandomNet {
  core::Network net;
  core::Tensor input;
  core::Tensor projection;  // loss = sum(output * projection)
  std::string description;
};

/// Small random network (at most three layers, at most 64 trainable scalars).
/// Consecutive indices rotate through templates so every layer kind appears.
inline RandomNet make_random_net(std::uint64_t seed, std::size_t index) {
  using core::LayerSpec;
  core::Rng rng(core::derive_seed(seed, index));
  const std::size_t batch = 3;
  const LayerSpec activations[] = {LayerSpec::leaky_relu(0.2), LayerSpec::tanh(), LayerSpec::elu(1.0),
                                   LayerSpec::sigmoid()};
  const LayerSpec& act = activations[rng.index(4)];
  core::Shape in_shape;
  std::vector<LayerSpec> layers;
  switch (index % 5) {
    case 0: {  // FC, act, FC
      const std::size_t in = 2 + rng.index(3), hidden = 2 + rng.index(4), out = 1 + rng.index(3);
      in_shape = {in};
      layers = {LayerSpec::affine(hidden), act, LayerSpec::affine(out)};
      break;
    }
    case 1: {  // FC, act, softmax
      const std::size_t in = 2 + rng.index(4), out = 2 + rng.index(4);
      in_shape = {in};
      layers = {LayerSpec::affine(out), act, LayerSpec::softmax()};
      break;
    }
    case 2: {  // Conv, flatten, FC
      const std::size_t side = 4 + rng.index(2);
      in_shape = {1, side, side};
      layers = {LayerSpec::conv2d(2, 3, 2), LayerSpec::flatten(), LayerSpec::affine(2)};
      break;
    }
    case 3: {  // FC, BN (batch statistics), act
      const std::size_t in = 2 + rng.index(4), out = 2 + rng.index(4);
      in_shape = {in};
      layers = {LayerSpec::affine(out), LayerSpec::batch_norm(), act};
      break;
    }
    default: {  // Conv, BN, act on a spatial map
      const std::size_t side = 3 + rng.index(3);
      in_shape = {1, side, side};
      layers = {LayerSpec::conv2d(2 + rng.index(2), 3, 1), LayerSpec::batch_norm(), act};
      break;
    }
  }
  RandomNet r{core::Network("probe", in_shape, layers, rng.next()), {}, {}, {}};
  // Move weights and biases off their deterministic init so biases matter too.
  for (auto& p : r.net.params()) {
    if (!p.trainable) continue;
    for (auto& v : p.value.values()) v += rng.uniform(-0.5, 0.5);
  }
  core::Shape batch_shape{batch};
  batch_shape.insert(batch_shape.end(), in_shape.begin(), in_shape.end());
  r.input = rng.normal_tensor(batch_shape);
  core::Shape out_shape{batch};
  out_shape.insert(out_shape.end(), r.net.output_shape().begin(), r.net.output_shape().end());
  r.projection = rng.normal_tensor(out_shape);
  for (const auto& l : layers) r.description += l.label() + " ";
  return r;
}

/// Forward value of sum(output * projection) in train mode with frozen
/// batch-norm statistics, so repeated evaluations see identical state.
inline double projected_loss(RandomNet& r) {
  core::Tape tape(false);
  auto out = r.net.forward(tape, tape.constant(r.input), core::Mode::kTrainFrozenStats);
  double s = 0.0;
  for (std::size_t i = 0; i < out.value().size(); ++i) s += out.value()[i] * r.projection[i];
  return s;
}

/// Largest relative error between backward() and central differences.
inline double max_gradient_error(RandomNet& r, double h = 1e-5) {
  r.net.params().zero_grad();
  core::Tape tape;
  auto out = r.net.forward(tape, tape.constant(r.input), core::Mode::kTrainFrozenStats);
  auto loss = core::sum(core::mul(out, tape.constant(r.projection)));
  tape.backward(loss);
  const auto numeric = numeric_gradients(r.net.params(), [&] { return projected_loss(r); }, h);
  double worst = 0.0;
  std::size_t k = 0;
  for (const auto& p : r.net.params()) {
    for (std::size_t i = 0; i < p.value.size(); ++i) worst = std::max(worst, relative_error(p.grad[i], numeric[k][i]));
    ++k;
  }
  return worst;
}

}  // namespace varleak::check
