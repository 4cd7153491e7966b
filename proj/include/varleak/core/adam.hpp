// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "varleak/core/params.hpp"

namespace varleak::core {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update of every trainable parameter from its
/// accumulated `grad`. Throws NonFiniteError naming the first parameter with
/// a NaN/Inf gradient; in that case nothing is updated.
void adam_step(ParamSet& params, const AdamConfig& config);

}  // namespace varleak::core
