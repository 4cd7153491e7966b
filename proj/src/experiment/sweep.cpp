// SPDX-License-Identifier: Apache-2.0
#include "varleak/experiment/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "varleak/core/rng.hpp"
#include "varleak/data/digits.hpp"
#include "varleak/error.hpp"
#include "varleak/models/bundle.hpp"
#include "varleak/train/trainer.hpp"

namespace varleak::experiment {

namespace {

constexpr std::uint64_t kAttackStream = 0xA77;
constexpr std::uint64_t kComplexityStream = 0xC0;
constexpr std::uint64_t kMineStream = 0x313E;

std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

unsigned default_workers() {
  if (const char* env = std::getenv("VARLEAK_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void SweepSpec::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("sweep spec: " + m); };
  if (betas.empty() || dzs.empty() || seeds.empty() || data_ratios.empty()) fail("grids must be non-empty");
  for (double b : betas) {
    if (!(b >= 0.0 && b <= 1.0)) fail("beta values must lie in [0, 1]");
  }
  for (std::size_t d : dzs) {
    if (d == 0) fail("d_z values must be positive");
  }
  for (double r : data_ratios) {
    if (!(r > 0.0 && r <= 1.0)) fail("data ratios must lie in (0, 1]");
  }
  if (output_dir.empty()) fail("output directory is required");
  if (dataset.file.empty()) dataset.colors.validate();
  if (mine_steps > 0 && mine_samples < 2) fail("MINE needs at least two samples");
  auto probe = train;
  probe.beta = betas.front();
  probe.d_z = dzs.front();
  probe.validate();
}

nlohmann::json to_json(const DatasetSpec& d) {
  return {{"file", d.file.string()},
          {"digits_dir", d.digits_dir.string()},
          {"colors", d.colors.p},
          {"color_is_utility", d.color_is_utility},
          {"count", d.count},
          {"seed", d.seed}};
}

nlohmann::json to_json(const SweepSpec& s) {
  nlohmann::json a{{"epochs", s.attack.epochs}, {"batch", s.attack.batch}, {"lr", s.attack.lr}};
  return {{"betas", s.betas},
          {"dzs", s.dzs},
          {"dataset", to_json(s.dataset)},
          {"data_ratios", s.data_ratios},
          {"seeds", s.seeds},
          {"output_dir", s.output_dir.string()},
          {"train", train::to_json(s.train)},
          {"attack", a},
          {"mine_steps", s.mine_steps},
          {"mine_samples", s.mine_samples}};
}

SweepSpec sweep_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("sweep spec: expected a JSON object");
  SweepSpec s;
  try {
    s.betas = j.at("betas").get<std::vector<double>>();
    s.dzs = j.at("dzs").get<std::vector<std::size_t>>();
    if (j.contains("seeds")) s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("data_ratios")) s.data_ratios = j.at("data_ratios").get<std::vector<double>>();
    s.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("train")) {
      const auto& t = j.at("train");
      const auto base = t.contains("preset") ? train::train_preset(t.at("preset").get<std::string>()) : s.train;
      s.train = train::config_from_json(t, base);
    }
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      if (d.contains("file")) s.dataset.file = d.at("file").get<std::string>();
      if (d.contains("digits_dir")) s.dataset.digits_dir = d.at("digits_dir").get<std::string>();
      if (d.contains("colors")) {
        const auto& c = d.at("colors");
        s.dataset.colors = c.is_string() ? data::ColorDistribution::preset(c.get<std::string>())
                                         : data::ColorDistribution{c.get<std::array<double, 3>>()};
      }
      if (d.contains("color_is_utility")) s.dataset.color_is_utility = d.at("color_is_utility").get<bool>();
      if (d.contains("count")) s.dataset.count = d.at("count").get<std::size_t>();
      if (d.contains("seed")) s.dataset.seed = d.at("seed").get<std::uint64_t>();
    }
    if (j.contains("attack")) {
      const auto& a = j.at("attack");
      if (a.contains("epochs")) s.attack.epochs = a.at("epochs").get<std::size_t>();
      if (a.contains("batch")) s.attack.batch = a.at("batch").get<std::size_t>();
      if (a.contains("lr")) s.attack.lr = a.at("lr").get<double>();
    }
    if (j.contains("mine_steps")) s.mine_steps = j.at("mine_steps").get<std::size_t>();
    if (j.contains("mine_samples")) s.mine_samples = j.at("mine_samples").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("sweep spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::vector<SweepPoint> sweep_points(const SweepSpec& s) {
  std::vector<SweepPoint> out;
  for (std::size_t d : s.dzs) {
    for (double b : s.betas) {
      for (std::uint64_t seed : s.seeds) out.push_back({b, d, seed});
    }
  }
  return out;
}

nlohmann::json point_config(const SweepSpec& s, const SweepPoint& p) {
  auto cfg = s.train;
  cfg.beta = p.beta;
  cfg.d_z = p.d_z;
  cfg.seed = p.seed;
  auto j = to_json(s);
  j.erase("betas");
  j.erase("dzs");
  j.erase("seeds");
  j.erase("output_dir");
  j["train"] = train::to_json(cfg);
  j["schema"] = kRecordSchema;
  return j;
}

data::LabeledDataset build_dataset(const DatasetSpec& d) {
  if (!d.file.empty()) return data::load_dataset(d.file);
  d.colors.validate();
  auto digits = data::load_digits_dir(d.digits_dir.empty() ? data::default_digits_dir() : d.digits_dir);
  if (d.count > 0 && d.count != digits.size()) digits = data::expand_digits(digits, d.count);
  data::ColoredMnistOptions o;
  o.colors = d.colors;
  o.seed = d.seed;
  o.color_is_utility = d.color_is_utility;
  return data::generate_colored_mnist(digits, o);
}

ExperimentRecord run_point(const SweepSpec& s, const SweepPoint& p, const data::SplitResult& splits) {
  const auto start = std::chrono::steady_clock::now();
  auto cfg = s.train;
  cfg.beta = p.beta;
  cfg.d_z = p.d_z;
  cfg.seed = p.seed;

  ExperimentRecord r;
  r.config_hash = config_hash(point_config(s, p));
  r.beta = p.beta;
  r.d_z = p.d_z;
  r.seed = p.seed;

  const auto trained = train::train(cfg, splits);
  const auto& last = trained.metrics.back();
  r.util_acc_train = last.util_acc_train;
  r.util_acc_val = last.util_acc_val;
  r.util_acc_test = last.util_acc_test;

  for (double ratio : s.data_ratios) {
    auto a = s.attack;
    a.data_ratio = ratio;
    a.seed = core::derive_seed(p.seed, kAttackStream);
    const auto res = leakage::train_adversary(trained.bundle, splits.train, splits.test, a);
    r.adversary.push_back({ratio, res.accuracy, res.xent});
  }

  const auto c = leakage::complexity_estimate(trained.bundle, splits.test, core::derive_seed(p.seed, kComplexityStream));
  r.kl_upper = c.kl_upper;
  r.kl_correction = c.correction;
  r.corrected = c.corrected;

  if (s.mine_steps > 0) {
    const auto idx = leakage::all_indices(splits.test, s.mine_samples);
    const auto post = leakage::posterior_of(trained.bundle, splits.test, idx);
    core::Rng rng(core::derive_seed(p.seed, kMineStream));
    const core::Tensor z = gauss::reparam_sample(post, rng.normal_tensor(post.mu.shape()));
    leakage::MineConfig m;
    m.steps = s.mine_steps;
    m.seed = core::derive_seed(p.seed, kMineStream + 1);
    r.mi_sz = leakage::mine_estimate(z, models::one_hot(splits.test.s_labels(idx), splits.test.s_classes), m).value;
    m.seed = core::derive_seed(p.seed, kMineStream + 2);
    r.mi_uz = leakage::mine_estimate(z, models::one_hot(splits.test.u_labels(idx), splits.test.u_classes), m).value;
  }
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

SweepSummary run_sweep(const SweepSpec& s, unsigned workers, const std::function<void(const std::string&)>& log) {
  s.validate();
  std::filesystem::create_directories(s.output_dir);
  const RecordFile records(s.output_dir / "records.ndjson");
  const auto done = records.completed();

  const auto dataset = build_dataset(s.dataset);
  const auto splits = data::split(dataset, s.train.split, s.train.split_seed);

  std::vector<SweepPoint> pending;
  SweepSummary summary;
  for (const auto& p : sweep_points(s)) {
    if (done.contains(config_hash(point_config(s, p)))) {
      ++summary.skipped;
    } else {
      pending.push_back(p);
    }
  }

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < pending.size(); i = next++) {
      const auto& p = pending[i];
      ExperimentRecord r;
      try {
        r = run_point(s, p, splits);
      } catch (const std::exception& e) {
        r.config_hash = config_hash(point_config(s, p));
        r.ok = false;
        r.error = e.what();
        r.beta = p.beta;
        r.d_z = p.d_z;
        r.seed = p.seed;
      }
      std::lock_guard lock(mu);
      records.append(r);
      ++summary.ran;
      if (!r.ok) ++summary.failed;
      if (log) {
        log("beta=" + short_num(p.beta) + " d_z=" + std::to_string(p.d_z) + " seed=" + std::to_string(p.seed) +
            (r.ok ? " util=" + short_num(r.util_acc_test) + " corrected=" + short_num(r.corrected)
                  : " failed: " + r.error));
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(pending.size())));
  std::vector<std::jthread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();

  write_reports(records.load(), s.output_dir);
  return summary;
}

void write_reports(std::span<const ExperimentRecord> records, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  // Latest successful record per hash, in grid order.
  std::map<std::string, ExperimentRecord> latest;
  for (const auto& r : records) {
    if (r.ok) latest[r.config_hash] = r;
  }
  std::vector<ExperimentRecord> ok;
  for (auto& [h, r] : latest) ok.push_back(r);
  std::sort(ok.begin(), ok.end(), [](const auto& a, const auto& b) {
    return std::tie(a.d_z, a.beta, a.seed, a.config_hash) < std::tie(b.d_z, b.beta, b.seed, b.config_hash);
  });

  auto opt = [](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
  {
    std::ofstream out(dir / "attack.csv", std::ios::trunc);
    out << kAttackHeader << '\n';
    for (const auto& r : ok) {
      for (const auto& a : r.adversary) {
        out << num(r.beta) << ',' << r.d_z << ',' << num(a.data_ratio) << ',' << num(a.accuracy) << ','
            << num(a.xent) << ',' << opt(r.mi_sz) << ',' << opt(r.mi_uz) << ',' << num(r.kl_upper) << ','
            << num(r.kl_correction) << '\n';
      }
    }
    if (!out) throw FormatError(FormatError::Kind::kIo, "cannot write attack.csv in " + dir.string());
  }

  std::map<std::size_t, std::map<double, std::vector<const ExperimentRecord*>>> groups;
  for (const auto& r : ok) groups[r.d_z][r.beta].push_back(&r);
  for (const auto& [dz, by_beta] : groups) {
    std::vector<double> ratios;
    for (const auto& [b, rs] : by_beta) {
      for (const auto* r : rs) {
        for (const auto& a : r->adversary) {
          if (std::find(ratios.begin(), ratios.end(), a.data_ratio) == ratios.end()) ratios.push_back(a.data_ratio);
        }
      }
    }
    std::sort(ratios.begin(), ratios.end());
    std::ofstream out(dir / ("trend_dz" + std::to_string(dz) + ".csv"), std::ios::trunc);
    out << "beta,seeds,util_acc_train,util_acc_val,util_acc_test";
    for (double q : ratios) out << ",adv_acc_r" << short_num(q);
    out << ",mi_sz_mine,mi_uz_mine,kl_upper,kl_correction,corrected\n";
    for (const auto& [b, rs] : by_beta) {
      auto med = [&rs](auto field) {
        std::vector<double> v;
        for (const auto* r : rs) {
          if (auto x = field(*r)) v.push_back(*x);
        }
        return v.empty() ? std::string() : num(median(v));
      };
      out << num(b) << ',' << rs.size();
      out << ',' << med([](const auto& r) { return std::optional(r.util_acc_train); });
      out << ',' << med([](const auto& r) { return std::optional(r.util_acc_val); });
      out << ',' << med([](const auto& r) { return std::optional(r.util_acc_test); });
      for (double q : ratios) {
        out << ',' << med([q](const ExperimentRecord& r) -> std::optional<double> {
          for (const auto& a : r.adversary) {
            if (a.data_ratio == q) return a.accuracy;
          }
          return std::nullopt;
        });
      }
      out << ',' << med([](const auto& r) { return r.mi_sz; });
      out << ',' << med([](const auto& r) { return r.mi_uz; });
      out << ',' << med([](const auto& r) { return std::optional(r.kl_upper); });
      out << ',' << med([](const auto& r) { return std::optional(r.kl_correction); });
      out << ',' << med([](const auto& r) { return std::optional(r.corrected); }) << '\n';
    }
  }
}

}  // namespace varleak::experiment
