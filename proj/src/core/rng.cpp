// SPDX-License-Identifier: Apache-2.0
#include "varleak/core/rng.hpp"

namespace varleak::core {

Tensor Rng::normal_tensor(Shape shape) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = normal();
  return t;
}

Tensor Rng::uniform_tensor(Shape shape, double lo, double hi) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = uniform(lo, hi);
  return t;
}

}  // namespace varleak::core
