// SPDX-License-Identifier: Apache-2.0
#include "varleak/core/layers.hpp"

#include <cmath>
#include <sstream>

#include "varleak/core/rng.hpp"
#include "varleak/error.hpp"

namespace varleak::core {

LayerSpec LayerSpec::affine(std::size_t units) {
  LayerSpec s;
  s.kind = LayerKind::kAffine;
  s.units = units;
  return s;
}

LayerSpec LayerSpec::conv2d(std::size_t channels, std::size_t kernel, std::size_t stride) {
  LayerSpec s;
  s.kind = LayerKind::kConv2d;
  s.units = channels;
  s.kernel = kernel;
  s.stride = stride;
  return s;
}

LayerSpec LayerSpec::leaky_relu(double slope) {
  LayerSpec s;
  s.kind = LayerKind::kLeakyRelu;
  s.slope = slope;
  return s;
}

LayerSpec LayerSpec::tanh() {
  LayerSpec s;
  s.kind = LayerKind::kTanh;
  return s;
}

LayerSpec LayerSpec::elu(double alpha) {
  LayerSpec s;
  s.kind = LayerKind::kElu;
  s.slope = alpha;
  return s;
}

LayerSpec LayerSpec::sigmoid() {
  LayerSpec s;
  s.kind = LayerKind::kSigmoid;
  return s;
}

LayerSpec LayerSpec::softmax() {
  LayerSpec s;
  s.kind = LayerKind::kSoftmax;
  return s;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec s;
  s.kind = LayerKind::kFlatten;
  return s;
}

LayerSpec LayerSpec::batch_norm(double momentum, double eps) {
  LayerSpec s;
  s.kind = LayerKind::kBatchNorm;
  s.momentum = momentum;
  s.eps = eps;
  return s;
}

std::string LayerSpec::label() const {
  std::ostringstream os;
  switch (kind) {
    case LayerKind::kAffine:
      os << "FC(" << units << ")";
      break;
    case LayerKind::kConv2d:
      os << "Conv(" << units << "," << kernel << "," << stride << ")";
      break;
    case LayerKind::kLeakyRelu:
      os << "LeakyReLU(" << slope << ")";
      break;
    case LayerKind::kTanh:
      os << "Tanh";
      break;
    case LayerKind::kElu:
      os << "ELU";
      break;
    case LayerKind::kSigmoid:
      os << "Sigmoid";
      break;
    case LayerKind::kSoftmax:
      os << "Softmax";
      break;
    case LayerKind::kFlatten:
      os << "Flatten";
      break;
    case LayerKind::kBatchNorm:
      os << "BN";
      break;
  }
  return os.str();
}

namespace {

std::string layer_tag(std::size_t index, const LayerSpec& spec) {
  return "layer " + std::to_string(index) + " (" + spec.label() + ")";
}

}  // namespace

Network::Network(std::string name, Shape input_shape, std::vector<LayerSpec> layers, std::uint64_t seed)
    : name_(std::move(name)), input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
  if (input_shape_.empty() || element_count(input_shape_) == 0) throw ConfigError(name_ + ": empty input shape");
  Rng rng(seed);
  Shape current = input_shape_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& spec = layers_[i];
    layer_inputs_.push_back(current);
    const std::string prefix = std::to_string(i) + ".";
    switch (spec.kind) {
      case LayerKind::kAffine: {
        if (current.size() != 1) {
          throw ConfigError(name_ + ": " + layer_tag(i, spec) + " needs a flat input, got " + shape_string(current));
        }
        if (spec.units == 0) throw ConfigError(name_ + ": " + layer_tag(i, spec) + " has zero units");
        const std::size_t fan_in = current[0];
        const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
        params_.add(prefix + "fc.weight", rng.uniform_tensor({fan_in, spec.units}, -limit, limit));
        params_.add(prefix + "fc.bias", Tensor({spec.units}));
        current = {spec.units};
        break;
      }
      case LayerKind::kConv2d: {
        if (current.size() != 3) {
          throw ConfigError(name_ + ": " + layer_tag(i, spec) + " needs a (C,H,W) input, got " +
                            shape_string(current));
        }
        if (spec.units == 0 || spec.kernel == 0 || spec.stride == 0) {
          throw ConfigError(name_ + ": " + layer_tag(i, spec) + " has a zero size parameter");
        }
        const std::size_t fan_in = current[0] * spec.kernel * spec.kernel;
        const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
        params_.add(prefix + "conv.weight", rng.uniform_tensor({fan_in, spec.units}, -limit, limit));
        params_.add(prefix + "conv.bias", Tensor({spec.units}));
        const std::size_t pad = (spec.kernel - 1) / 2;
        if (current[1] + 2 * pad < spec.kernel || current[2] + 2 * pad < spec.kernel) {
          throw ConfigError(name_ + ": " + layer_tag(i, spec) + " kernel larger than input " + shape_string(current));
        }
        current = {spec.units, (current[1] + 2 * pad - spec.kernel) / spec.stride + 1,
                   (current[2] + 2 * pad - spec.kernel) / spec.stride + 1};
        break;
      }
      case LayerKind::kBatchNorm: {
        const std::size_t features = current.size() == 3 ? current[0] : element_count(current);
        params_.add(prefix + "bn.gamma", Tensor({features}, 1.0));
        params_.add(prefix + "bn.beta", Tensor({features}));
        params_.add(prefix + "bn.running_mean", Tensor({features}), false);
        params_.add(prefix + "bn.running_var", Tensor({features}, 1.0), false);
        break;
      }
      case LayerKind::kFlatten:
        current = {element_count(current)};
        break;
      case LayerKind::kSoftmax:
        if (current.size() != 1) throw ConfigError(name_ + ": " + layer_tag(i, spec) + " needs a flat input");
        break;
      default:
        break;
    }
  }
  output_shape_ = current;
}

void Network::check_input(const Tensor& input) const {
  Shape per_example(input.shape().begin() + (input.rank() > 0 ? 1 : 0), input.shape().end());
  const bool flat_ok = input_shape_.size() == 1 && element_count(per_example) == input_shape_[0];
  if (per_example != input_shape_ && !flat_ok) {
    const std::string where = layers_.empty() ? std::string("input") : layer_tag(0, layers_[0]);
    throw ConfigError(name_ + ": " + where + " expects per-example shape " + shape_string(input_shape_) + ", got " +
                      shape_string(per_example));
  }
}

Var Network::run(Tape& tape, Var input, Mode mode, std::size_t stop) {
  check_input(input.value());
  Var h = input;
  const std::size_t batch = input.value().rows();
  if (input_shape_.size() == 1 && input.value().rank() != 2) h = reshape(h, {batch, input_shape_[0]});
  if (input_shape_.size() == 3 && input.value().rank() != 4) {
    h = reshape(h, {batch, input_shape_[0], input_shape_[1], input_shape_[2]});
  }
  for (std::size_t i = 0; i < stop; ++i) {
    const LayerSpec& spec = layers_[i];
    const std::string prefix = std::to_string(i) + ".";
    switch (spec.kind) {
      case LayerKind::kAffine:
        h = add_bias(matmul(h, tape.parameter(params_.get(prefix + "fc.weight"))),
                     tape.parameter(params_.get(prefix + "fc.bias")));
        break;
      case LayerKind::kConv2d:
        h = conv2d(h, tape.parameter(params_.get(prefix + "conv.weight")),
                   tape.parameter(params_.get(prefix + "conv.bias")), spec.kernel, spec.stride);
        break;
      case LayerKind::kLeakyRelu:
        h = leaky_relu(h, spec.slope);
        break;
      case LayerKind::kTanh:
        h = core::tanh(h);
        break;
      case LayerKind::kElu:
        h = elu(h, spec.slope);
        break;
      case LayerKind::kSigmoid:
        h = sigmoid(h);
        break;
      case LayerKind::kSoftmax:
        h = softmax(h);
        break;
      case LayerKind::kFlatten:
        h = reshape(h, {batch, element_count(layer_inputs_[i])});
        break;
      case LayerKind::kBatchNorm: {
        const NormMode norm = mode == Mode::kTrain              ? NormMode::kBatchStats
                              : mode == Mode::kTrainFrozenStats ? NormMode::kBatchStatsFrozen
                                                                : NormMode::kRunningStats;
        h = batch_norm(h, tape.parameter(params_.get(prefix + "bn.gamma")),
                       tape.parameter(params_.get(prefix + "bn.beta")), params_.get(prefix + "bn.running_mean").value,
                       params_.get(prefix + "bn.running_var").value, norm, spec.momentum, spec.eps);
        break;
      }
    }
  }
  return h;
}

Var Network::forward(Tape& tape, Var input, Mode mode) { return run(tape, input, mode, layers_.size()); }

Var Network::forward_logits(Tape& tape, Var input, Mode mode) {
  std::size_t stop = layers_.size();
  if (stop > 0 && (layers_.back().kind == LayerKind::kSigmoid || layers_.back().kind == LayerKind::kSoftmax)) --stop;
  return run(tape, input, mode, stop);
}

Tensor Network::predict(const Tensor& input) const {
  Tape tape(false);
  // Eval mode neither writes gradients nor running statistics.
  auto& self = const_cast<Network&>(*this);
  return self.forward(tape, tape.constant(input), Mode::kEval).value();
}

void Network::zero_last_affine() {
  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (layers_[i].kind == LayerKind::kAffine) {
      const std::string prefix = std::to_string(i) + ".";
      params_.get(prefix + "fc.weight").value.fill(0.0);
      params_.get(prefix + "fc.bias").value.fill(0.0);
      return;
    }
  }
  throw ConfigError(name_ + ": no affine layer to zero");
}

}  // namespace varleak::core
