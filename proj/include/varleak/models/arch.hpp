// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"
#include "varleak/core/layers.hpp"

namespace varleak::models {

using core::LayerSpec;
using Stack = std::vector<LayerSpec>;

/// Layer stacks for every network, with widths already resolved for a given
/// d_z, |U| and |S|. The encoder trunk stops before the mu / log sigma heads;
/// each head is a single FC(d_z).
struct ArchConfig {
  std::string name;
  Stack encoder_trunk;
  Stack decoder;
  Stack latent_disc;
  Stack attr_disc;
  Stack adversary;
  Stack mine;

  bool operator==(const ArchConfig&) const = default;
};

/// Known names: mnist-ref, celeba-ref, desk-mlp.
ArchConfig make_preset(const std::string& name, std::size_t d_z, std::size_t u_classes, std::size_t s_classes);
std::vector<std::string> preset_names();

/// Statistic network: three FC(100)+ELU then FC(1).
Stack mine_ref_stack();

nlohmann::json to_json(const LayerSpec& spec);
LayerSpec layer_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ArchConfig& arch);
ArchConfig arch_from_json(const nlohmann::json& j);

/// "FC(256) -> LeakyReLU -> ..." for logs and reports.
std::string describe(const Stack& stack);

}  // namespace varleak::models
