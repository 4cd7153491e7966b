// SPDX-License-Identifier: Apache-2.0
#include "varleak/train/config.hpp"

#include <cmath>

#include "varleak/error.hpp"
#include "varleak/models/arch.hpp"

namespace varleak::train {

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("train config: " + msg); };
  auto in_unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
  if (!in_unit(beta)) fail("beta must be in [0, 1], got " + std::to_string(beta));
  if (warmup.beta && !in_unit(*warmup.beta)) fail("warm-up beta must be in [0, 1]");
  if (d_z == 0) fail("d_z must be positive");
  if (batch == 0) fail("batch size must be at least 1");
  if (warmup.iterations > 0 && warmup.batch == 0) fail("warm-up batch size must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("learning rate must be positive");
  if (!(block1_lr_factor > 0.0) || !std::isfinite(block1_lr_factor)) fail("block-1 rate factor must be positive");
  if (!(warmup.lr > 0.0) || !std::isfinite(warmup.lr)) fail("warm-up learning rate must be positive");
  if (eval_every == 0) fail("eval_every must be at least 1");
  if (!(gumbel_temperature > 0.0)) fail("Gumbel temperature must be positive");
  const auto names = models::preset_names();
  if (std::find(names.begin(), names.end(), arch) == names.end()) fail("unknown architecture '" + arch + "'");
  const double s = split.train + split.val + split.test;
  if (!(split.train > 0.0 && split.val > 0.0 && split.test > 0.0) || std::abs(s - 1.0) > 1e-9) {
    fail("split fractions must be positive and sum to 1");
  }
}

TrainConfig train_preset(const std::string& name) {
  TrainConfig c;
  c.preset = name;
  if (name == "mnist-ref") {
    c.arch = "mnist-ref";
    c.batch = 2048;
    c.iterations = 500;
    c.lr = 1e-4;
    c.warmup = {0.005, 50, 1024, std::nullopt};
  } else if (name == "celeba-ref") {
    c.arch = "celeba-ref";
    c.d_z = 64;
    c.batch = 1024;
    c.iterations = 500;
    c.lr = 1e-5;
    c.warmup = {0.0005, 100, 512, std::nullopt};
  } else if (name == "mnist-desk") {
    // Sized for a single CPU core on the 10k-digit subset.
    c.arch = "desk-mlp";
    c.batch = 256;
    c.iterations = 500;
    c.lr = 1e-3;
    c.warmup = {0.002, 200, 256, std::nullopt};
    c.eval_every = 25;
  } else {
    throw ConfigError("unknown training preset '" + name + "'");
  }
  return c;
}

std::vector<std::string> train_preset_names() { return {"mnist-ref", "celeba-ref", "mnist-desk"}; }

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json warm{{"lr", c.warmup.lr}, {"iterations", c.warmup.iterations}, {"batch", c.warmup.batch}};
  warm["beta"] = c.warmup.beta ? nlohmann::json(*c.warmup.beta) : nlohmann::json(nullptr);
  return {{"preset", c.preset},
          {"arch", c.arch},
          {"beta", c.beta},
          {"d_z", c.d_z},
          {"batch", c.batch},
          {"iterations", c.iterations},
          {"lr", c.lr},
          {"block1_lr_factor", c.block1_lr_factor},
          {"warmup", warm},
          {"seed", c.seed},
          {"batch_norm", c.batch_norm},
          {"patience", c.patience},
          {"eval_every", c.eval_every},
          {"eval_train_limit", c.eval_train_limit},
          {"checkpoint_every", c.checkpoint_every},
          {"gumbel_temperature", c.gumbel_temperature},
          {"split", {c.split.train, c.split.val, c.split.test}},
          {"split_seed", c.split_seed}};
}

TrainConfig config_from_json(const nlohmann::json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("train config: expected a JSON object");
  try {
    auto take = [&j](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    take("preset", c.preset);
    take("arch", c.arch);
    take("beta", c.beta);
    take("d_z", c.d_z);
    take("batch", c.batch);
    take("iterations", c.iterations);
    take("lr", c.lr);
    take("block1_lr_factor", c.block1_lr_factor);
    take("seed", c.seed);
    take("batch_norm", c.batch_norm);
    take("patience", c.patience);
    take("eval_every", c.eval_every);
    take("eval_train_limit", c.eval_train_limit);
    take("checkpoint_every", c.checkpoint_every);
    take("gumbel_temperature", c.gumbel_temperature);
    take("split_seed", c.split_seed);
    if (j.contains("warmup")) {
      const auto& w = j.at("warmup");
      if (w.contains("lr")) c.warmup.lr = w.at("lr").get<double>();
      if (w.contains("iterations")) c.warmup.iterations = w.at("iterations").get<std::size_t>();
      if (w.contains("batch")) c.warmup.batch = w.at("batch").get<std::size_t>();
      if (w.contains("beta")) {
        c.warmup.beta = w.at("beta").is_null() ? std::nullopt : std::optional<double>(w.at("beta").get<double>());
      }
    }
    if (j.contains("split")) {
      const auto f = j.at("split").get<std::vector<double>>();
      if (f.size() != 3) throw ConfigError("train config: split needs three fractions");
      c.split = {f[0], f[1], f[2]};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

}  // namespace varleak::train
