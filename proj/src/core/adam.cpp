// SPDX-License-Identifier: Apache-2.0
#include "varleak/core/adam.hpp"

#include <cmath>

#include "varleak/core/kernels.hpp"
#include "varleak/error.hpp"

namespace varleak::core {

void adam_step(ParamSet& params, const AdamConfig& config) {
  if (!(config.lr > 0.0)) throw ConfigError("Adam learning rate must be positive");
  for (const auto& p : params) {
    if (!p.trainable) continue;
    if (!(p.grad.shape() == p.value.shape())) throw ConfigError("gradient shape mismatch for '" + p.name + "'");
    if (!p.grad.all_finite()) throw NonFiniteError("non-finite gradient for parameter '" + p.name + "'");
  }
  const auto& kern = kernels::active();
  for (auto& p : params) {
    if (!p.trainable) continue;
    ++p.steps;
    const double t = static_cast<double>(p.steps);
    const kernels::AdamCoefficients coeff{config.lr, config.beta1, config.beta2, config.eps,
                                          1.0 - std::pow(config.beta1, t), 1.0 - std::pow(config.beta2, t)};
    kern.adam_update(p.value.data(), p.grad.data(), p.moment1.data(), p.moment2.data(), p.value.size(), coeff);
  }
}

}  // namespace varleak::core
