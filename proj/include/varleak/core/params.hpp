// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <string_view>

#include "varleak/core/tensor.hpp"

namespace varleak::core {

/// A named tensor plus its gradient and Adam state. Buffers (batch-norm
/// running statistics) are stored as non-trainable parameters so they are
/// checkpointed with the weights.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor moment1;
  Tensor moment2;
  std::uint64_t steps = 0;
  bool trainable = true;
};

class ParamSet {
 public:
  Parameter& add(std::string name, Tensor init, bool trainable = true);

  [[nodiscard]] Parameter& get(std::string_view name);
  [[nodiscard]] const Parameter& get(std::string_view name) const;
  [[nodiscard]] Parameter* find(std::string_view name) noexcept;
  [[nodiscard]] const Parameter* find(std::string_view name) const noexcept;

  void zero_grad();
  /// Number of trainable scalars.
  [[nodiscard]] std::size_t scalar_count() const noexcept;
  [[nodiscard]] std::size_t size() const noexcept { return params_.size(); }

  auto begin() noexcept { return params_.begin(); }
  auto end() noexcept { return params_.end(); }
  [[nodiscard]] auto begin() const noexcept { return params_.begin(); }
  [[nodiscard]] auto end() const noexcept { return params_.end(); }

  /// True when every value (weights and buffers) is bit-identical.
  [[nodiscard]] bool same_values(const ParamSet& other) const noexcept;

 private:
  // deque keeps references stable across add()
  std::deque<Parameter> params_;
};

}  // namespace varleak::core
