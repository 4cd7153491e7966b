// SPDX-License-Identifier: Apache-2.0
#include "varleak/core/params.hpp"

#include <algorithm>

#include "varleak/error.hpp"

namespace varleak::core {

Parameter& ParamSet::add(std::string name, Tensor init, bool trainable) {
  if (find(name) != nullptr) throw ConfigError("duplicate parameter name '" + name + "'");
  Parameter p;
  p.name = std::move(name);
  p.grad = Tensor::zeros_like(init);
  if (trainable) {
    p.moment1 = Tensor::zeros_like(init);
    p.moment2 = Tensor::zeros_like(init);
  }
  p.value = std::move(init);
  p.trainable = trainable;
  params_.push_back(std::move(p));
  return params_.back();
}

Parameter* ParamSet::find(std::string_view name) noexcept {
  auto it = std::find_if(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
  return it == params_.end() ? nullptr : &*it;
}

const Parameter* ParamSet::find(std::string_view name) const noexcept {
  auto it = std::find_if(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
  return it == params_.end() ? nullptr : &*it;
}

Parameter& ParamSet::get(std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw ConfigError("no parameter named '" + std::string(name) + "'");
}

const Parameter& ParamSet::get(std::string_view name) const {
  if (const auto* p = find(name)) return *p;
  throw ConfigError("no parameter named '" + std::string(name) + "'");
}

void ParamSet::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

std::size_t ParamSet::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.trainable) n += p.value.size();
  }
  return n;
}

bool ParamSet::same_values(const ParamSet& other) const noexcept {
  if (params_.size() != other.params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name != other.params_[i].name || !(params_[i].value == other.params_[i].value)) return false;
  }
  return true;
}

}  // namespace varleak::core
