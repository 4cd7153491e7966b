// SPDX-License-Identifier: Apache-2.0
#include "varleak/models/arch.hpp"

#include "varleak/error.hpp"

namespace varleak::models {

using core::LayerKind;

namespace {

LayerSpec fc(std::size_t n) { return LayerSpec::affine(n); }
LayerSpec bn() { return LayerSpec::batch_norm(); }
LayerSpec lrelu() { return LayerSpec::leaky_relu(); }

// FC(512), BN, LReLU, FC(256), BN, LReLU, FC(1), Sigmoid (BN optional).
Stack latent_disc(bool with_bn) {
  Stack s{fc(512)};
  if (with_bn) s.push_back(bn());
  s.push_back(lrelu());
  s.push_back(fc(256));
  if (with_bn) s.push_back(bn());
  s.insert(s.end(), {lrelu(), fc(1), LayerSpec::sigmoid()});
  return s;
}

struct KindName {
  LayerKind kind;
  const char* name;
};
constexpr KindName kKindNames[] = {
    {LayerKind::kAffine, "fc"},       {LayerKind::kConv2d, "conv"},     {LayerKind::kLeakyRelu, "leaky_relu"},
    {LayerKind::kTanh, "tanh"},       {LayerKind::kElu, "elu"},         {LayerKind::kSigmoid, "sigmoid"},
    {LayerKind::kSoftmax, "softmax"}, {LayerKind::kFlatten, "flatten"}, {LayerKind::kBatchNorm, "bn"},
};

const char* kind_name(LayerKind k) {
  for (const auto& kn : kKindNames) {
    if (kn.kind == k) return kn.name;
  }
  return "?";
}

}  // namespace

Stack mine_ref_stack() {
  return {fc(100), LayerSpec::elu(), fc(100), LayerSpec::elu(), fc(100), LayerSpec::elu(), fc(1)};
}

std::vector<std::string> preset_names() { return {"mnist-ref", "celeba-ref", "desk-mlp"}; }

ArchConfig make_preset(const std::string& name, std::size_t d_z, std::size_t u, std::size_t s) {
  if (d_z == 0 || u < 2 || s < 2) throw ConfigError("preset needs d_z >= 1 and at least two classes for u and s");
  ArchConfig a;
  a.name = name;
  a.mine = mine_ref_stack();
  if (name == "mnist-ref") {
    a.encoder_trunk = {LayerSpec::conv2d(64, 5, 2), bn(),    lrelu(), LayerSpec::conv2d(128, 5, 2), bn(),
                       lrelu(), LayerSpec::flatten(), fc(4 * d_z), bn(), LayerSpec::tanh()};
    a.decoder = {fc(4 * d_z), bn(), lrelu(), fc(u), LayerSpec::softmax()};
    a.latent_disc = latent_disc(true);
    a.attr_disc = {fc(8 * u), bn(), lrelu(), fc(8 * u), bn(), lrelu(), fc(1), LayerSpec::sigmoid()};
    a.adversary = {fc(4 * d_z), bn(), lrelu(), fc(s), LayerSpec::softmax()};
  } else if (name == "celeba-ref") {
    for (std::size_t ch : {16u, 32u, 64u, 128u, 256u}) {
      a.encoder_trunk.insert(a.encoder_trunk.end(), {LayerSpec::conv2d(ch, 3, 2), bn(), lrelu()});
    }
    a.encoder_trunk.insert(a.encoder_trunk.end(), {LayerSpec::flatten(), fc(4 * d_z), bn(), LayerSpec::tanh()});
    a.decoder = {fc(d_z), bn(), lrelu(), fc(u), LayerSpec::softmax()};
    a.latent_disc = latent_disc(true);
    a.attr_disc = {fc(4 * u), bn(), lrelu(), fc(u), bn(), lrelu(), fc(1), LayerSpec::sigmoid()};
    a.adversary = {fc(d_z), bn(), lrelu(), fc(s), LayerSpec::softmax()};
  } else if (name == "desk-mlp") {
    a.encoder_trunk = {LayerSpec::flatten(), fc(256), lrelu(), fc(4 * d_z), LayerSpec::tanh()};
    a.decoder = {fc(4 * d_z), lrelu(), fc(u), LayerSpec::softmax()};
    a.latent_disc = latent_disc(false);
    a.attr_disc = {fc(8 * u), lrelu(), fc(8 * u), lrelu(), fc(1), LayerSpec::sigmoid()};
    a.adversary = {fc(4 * d_z), lrelu(), fc(s), LayerSpec::softmax()};
  } else {
    throw ConfigError("unknown architecture preset '" + name + "'");
  }
  return a;
}

nlohmann::json to_json(const LayerSpec& spec) {
  nlohmann::json j{{"kind", kind_name(spec.kind)}};
  switch (spec.kind) {
    case LayerKind::kAffine: j["units"] = spec.units; break;
    case LayerKind::kConv2d:
      j["channels"] = spec.units;
      j["kernel"] = spec.kernel;
      j["stride"] = spec.stride;
      break;
    case LayerKind::kLeakyRelu: j["slope"] = spec.slope; break;
    case LayerKind::kElu: j["alpha"] = spec.slope; break;
    case LayerKind::kBatchNorm:
      j["momentum"] = spec.momentum;
      j["eps"] = spec.eps;
      break;
    default: break;
  }
  return j;
}

LayerSpec layer_from_json(const nlohmann::json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "fc") return LayerSpec::affine(j.at("units").get<std::size_t>());
    if (kind == "conv") {
      return LayerSpec::conv2d(j.at("channels").get<std::size_t>(), j.at("kernel").get<std::size_t>(),
                               j.value("stride", std::size_t{1}));
    }
    if (kind == "leaky_relu") return LayerSpec::leaky_relu(j.value("slope", 0.2));
    if (kind == "tanh") return LayerSpec::tanh();
    if (kind == "elu") return LayerSpec::elu(j.value("alpha", 1.0));
    if (kind == "sigmoid") return LayerSpec::sigmoid();
    if (kind == "softmax") return LayerSpec::softmax();
    if (kind == "flatten") return LayerSpec::flatten();
    if (kind == "bn") return LayerSpec::batch_norm(j.value("momentum", 0.99), j.value("eps", 1e-5));
    throw ConfigError("unknown layer kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed layer spec: ") + e.what());
  }
}

namespace {
nlohmann::json stack_json(const Stack& s) {
  auto arr = nlohmann::json::array();
  for (const auto& l : s) arr.push_back(to_json(l));
  return arr;
}
Stack stack_from(const nlohmann::json& j, const char* key) {
  Stack s;
  for (const auto& l : j.at(key)) s.push_back(layer_from_json(l));
  return s;
}
}  // namespace

nlohmann::json to_json(const ArchConfig& a) {
  return {{"name", a.name},
          {"encoder_trunk", stack_json(a.encoder_trunk)},
          {"decoder", stack_json(a.decoder)},
          {"latent_disc", stack_json(a.latent_disc)},
          {"attr_disc", stack_json(a.attr_disc)},
          {"adversary", stack_json(a.adversary)},
          {"mine", stack_json(a.mine)}};
}

ArchConfig arch_from_json(const nlohmann::json& j) {
  try {
    ArchConfig a;
    a.name = j.at("name").get<std::string>();
    a.encoder_trunk = stack_from(j, "encoder_trunk");
    a.decoder = stack_from(j, "decoder");
    a.latent_disc = stack_from(j, "latent_disc");
    a.attr_disc = stack_from(j, "attr_disc");
    a.adversary = stack_from(j, "adversary");
    a.mine = stack_from(j, "mine");
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed architecture: ") + e.what());
  }
}

std::string describe(const Stack& stack) {
  std::string out;
  for (const auto& l : stack) {
    if (!out.empty()) out += " -> ";
    out += l.label();
  }
  return out;
}

}  // namespace varleak::models
