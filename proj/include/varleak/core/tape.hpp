// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "varleak/core/params.hpp"
#include "varleak/core/tensor.hpp"

namespace varleak::core {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  [[nodiscard]] Tape* tape() const noexcept { return tape_; }
  [[nodiscard]] std::size_t id() const noexcept { return id_; }
  [[nodiscard]] const Tensor& value() const;
  [[nodiscard]] const Shape& shape() const { return value().shape(); }
  [[nodiscard]] bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records a forward computation so it can be differentiated in reverse.
/// A tape with recording disabled evaluates values only.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_value, const Tensor& out_grad)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  [[nodiscard]] bool recording() const noexcept { return recording_; }

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf whose gradient can be read with grad() after backward.
  Var leaf(Tensor value);
  /// Leaf bound to a parameter; backward accumulates into `p.grad`.
  Var parameter(Parameter& p);

  /// Node produced by an op. `fn` receives the node's value and output
  /// gradient and must accumulate into its parents through accumulate() or
  /// grad_buffer().
  Var record(Tensor value, bool requires_grad, BackwardFn fn);

  [[nodiscard]] const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  [[nodiscard]] bool requires_grad(Var v) const;
  /// Gradient of the last backward() target with respect to `v`.
  [[nodiscard]] const Tensor& grad(Var v) const;
  void accumulate(Var v, const Tensor& g);
  /// Mutable gradient buffer of `v`, created zero-filled on first use.
  Tensor& grad_buffer(Var v);

  /// Reverse sweep from a scalar node. Gradients of parameters reached by
  /// the sweep are added to their `grad` tensors.
  void backward(Var loss);

  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  void check_owned(Var v) const;

  std::vector<Node> nodes_;
  bool recording_;
  bool swept_ = false;
};

// Differentiable operations. Two-dimensional views treat axis 0 as rows and
// fold the remaining axes into columns.

Var matmul(Var a, Var w);
Var add_bias(Var x, Var bias);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double c);
Var exp(Var a);
Var log(Var a);
/// log(max(a, floor)); the gradient is zero where the floor is active.
Var log_floor(Var a, double floor);
Var square(Var a);
Var clamp(Var a, double lo, double hi);
Var tanh(Var a);
Var sigmoid(Var a);
Var log_sigmoid(Var a);
Var leaky_relu(Var a, double slope);
Var elu(Var a, double alpha);
Var softmax(Var a);
Var log_softmax(Var a);
Var sum(Var a);
Var mean(Var a);
/// (m, n) -> (m, 1)
Var row_sum(Var a);
/// log((1/n) sum_i exp(a_i)) over all elements.
Var log_mean_exp(Var a);
/// out[i] = a[i, labels[i]]; shape (m).
Var pick(Var a, std::span<const std::size_t> labels);
Var concat_cols(Var a, Var b);
Var concat_rows(Var a, Var b);
Var reshape(Var a, Shape shape);

/// x: (B, C, H, W); weight: (C*k*k, O); bias: (O). Symmetric zero padding of
/// (k-1)/2.
Var conv2d(Var x, Var weight, Var bias, std::size_t kernel, std::size_t stride);

enum class NormMode { kBatchStats, kBatchStatsFrozen, kRunningStats };

/// Batch normalization over axis 0 (and spatial axes for rank-4 inputs).
/// Running statistics are updated only in kBatchStats mode.
Var batch_norm(Var x, Var gamma, Var beta, Tensor& running_mean, Tensor& running_var, NormMode mode,
               double momentum, double eps);

}  // namespace varleak::core
