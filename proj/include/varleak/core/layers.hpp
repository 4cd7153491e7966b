// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "varleak/core/params.hpp"
#include "varleak/core/tape.hpp"

namespace varleak::core {

enum class LayerKind { kAffine, kConv2d, kLeakyRelu, kTanh, kElu, kSigmoid, kSoftmax, kFlatten, kBatchNorm };

struct LayerSpec {
  LayerKind kind = LayerKind::kAffine;
  std::size_t units = 0;  // affine fan-out or conv output channels
  std::size_t kernel = 0;
  std::size_t stride = 1;
  double slope = 0.2;  // leaky-relu slope or elu alpha
  double momentum = 0.99;
  double eps = 1e-5;

  static LayerSpec affine(std::size_t units);
  static LayerSpec conv2d(std::size_t channels, std::size_t kernel, std::size_t stride);
  static LayerSpec leaky_relu(double slope = 0.2);
  static LayerSpec tanh();
  static LayerSpec elu(double alpha = 1.0);
  static LayerSpec sigmoid();
  static LayerSpec softmax();
  static LayerSpec flatten();
  static LayerSpec batch_norm(double momentum = 0.99, double eps = 1e-5);

  /// Table-style label, e.g. "FC(256)" or "Conv(64,5,2)".
  [[nodiscard]] std::string label() const;
  bool operator==(const LayerSpec&) const = default;
};

/// How a forward pass treats batch-norm statistics.
enum class Mode {
  kTrain,              // batch statistics, running averages updated
  kTrainFrozenStats,   // batch statistics, running averages untouched
  kEval,               // running averages
};

/// A feed-forward stack of layers with its own parameters.
class Network {
 public:
  Network() = default;
  /// `input_shape` excludes the batch axis. Weights are drawn from
  /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases start at zero.
  Network(std::string name, Shape input_shape, std::vector<LayerSpec> layers, std::uint64_t seed);

  [[nodiscard]] const std::string& name() const noexcept { return name_; }
  [[nodiscard]] const Shape& input_shape() const noexcept { return input_shape_; }
  [[nodiscard]] const Shape& output_shape() const noexcept { return output_shape_; }
  [[nodiscard]] std::size_t output_size() const noexcept { return element_count(output_shape_); }
  [[nodiscard]] const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  [[nodiscard]] ParamSet& params() noexcept { return params_; }
  [[nodiscard]] const ParamSet& params() const noexcept { return params_; }

  Var forward(Tape& tape, Var input, Mode mode);
  /// Like forward() but stops before a trailing sigmoid or softmax.
  Var forward_logits(Tape& tape, Var input, Mode mode);
  /// Evaluation-mode forward on a throwaway tape.
  [[nodiscard]] Tensor predict(const Tensor& input) const;

  /// Zeroes the weights and bias of the last affine layer.
  void zero_last_affine();

 private:
  Var run(Tape& tape, Var input, Mode mode, std::size_t stop);
  void check_input(const Tensor& input) const;

  std::string name_;
  Shape input_shape_;
  Shape output_shape_;
  std::vector<LayerSpec> layers_;
  std::vector<Shape> layer_inputs_;
  ParamSet params_;
};

}  // namespace varleak::core
