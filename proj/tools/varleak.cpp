// SPDX-License-Identifier: Apache-2.0
// varleak: dataset generation, training, attacks, estimation and sweeps.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "varleak/core/rng.hpp"
#include "varleak/data/colored_mnist.hpp"
#include "varleak/data/digits.hpp"
#include "varleak/data/discrete.hpp"
#include "varleak/data/ingest.hpp"
#include "varleak/error.hpp"
#include "varleak/experiment/sweep.hpp"
#include "varleak/leakage/estimators.hpp"
#include "varleak/leakage/exact.hpp"
#include "varleak/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace varleak;
using nlohmann::json;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(std::string("bad ") + what + " list '" + text + "'");
    }
  }
  if (out.empty()) throw ConfigError(std::string("empty ") + what + " list");
  return out;
}

data::ColorDistribution parse_colors(const std::string& text) {
  if (text == "balanced" || text == "biased") return data::ColorDistribution::preset(text);
  const auto v = parse_list(text, "color");
  if (v.size() != 3) throw ConfigError("--colors needs three probabilities (red, green, blue)");
  data::ColorDistribution d{{v[0], v[1], v[2]}};
  d.validate();
  return d;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot read " + p.string());
  const auto j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError(p.string() + " is not valid JSON");
  return j;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  out << text;
  if (!out) throw FormatError(FormatError::Kind::kIo, "cannot write " + p.string());
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw ConfigError(std::string(what) + " not found: " + p.string());
}

// Training options shared by pretrain and train.
struct TrainFlags {
  std::string preset = "mnist-desk";
  std::string config_file;
  std::optional<double> beta;
  std::optional<std::size_t> dz;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> iterations;
  std::optional<std::size_t> checkpoint_every;

  void add(CLI::App* app) {
    app->add_option("--preset", preset, "Training preset")->check(CLI::IsMember(train::train_preset_names()));
    app->add_option("--config", config_file, "JSON file overriding preset fields");
    app->add_option("--beta", beta, "Information-complexity weight in [0, 1]");
    app->add_option("--dz", dz, "Latent dimension");
    app->add_option("--seed", seed, "Training seed");
    app->add_option("--iterations", iterations, "Outer iterations of the five-block loop");
    app->add_option("--checkpoint-every", checkpoint_every, "Write a checkpoint every k iterations");
  }

  [[nodiscard]] train::TrainConfig resolve() const {
    auto c = train::train_preset(preset);
    if (!config_file.empty()) c = train::config_from_json(read_json(config_file), c);
    if (beta) c.beta = *beta;
    if (dz) c.d_z = *dz;
    if (seed) c.seed = *seed;
    if (iterations) c.iterations = *iterations;
    if (checkpoint_every) c.checkpoint_every = *checkpoint_every;
    c.validate();
    return c;
  }
};

/// Training config saved next to a checkpoint by `train`, if any.
std::optional<train::TrainConfig> sibling_config(const fs::path& checkpoint) {
  const auto p = checkpoint.parent_path() / "config.json";
  if (!fs::is_regular_file(p)) return std::nullopt;
  return train::config_from_json(read_json(p));
}

void check_compatible(const models::ModelBundle& b, const data::LabeledDataset& ds, std::optional<std::size_t> dz) {
  const auto& d = b.dims();
  if (d.input != ds.input_shape()) {
    throw ConfigError("checkpoint expects input " + core::shape_string(d.input) + " but the dataset has " +
                      core::shape_string(ds.input_shape()));
  }
  if (d.u_classes != ds.u_classes || d.s_classes != ds.s_classes) {
    throw ConfigError("checkpoint label alphabets (" + std::to_string(d.u_classes) + ", " +
                      std::to_string(d.s_classes) + ") differ from the dataset's (" + std::to_string(ds.u_classes) +
                      ", " + std::to_string(ds.s_classes) + ")");
  }
  if (dz && *dz != d.d_z) {
    throw ConfigError("checkpoint has d_z = " + std::to_string(d.d_z) + ", expected " + std::to_string(*dz));
  }
}

void append_rows(const fs::path& csv, const std::vector<std::string>& rows) {
  const bool fresh = !fs::exists(csv) || fs::file_size(csv) == 0;
  std::ofstream out(csv, std::ios::app);
  if (fresh) out << experiment::kAttackHeader << '\n';
  for (const auto& r : rows) out << r << '\n';
  if (!out) throw FormatError(FormatError::Kind::kIo, "cannot append to " + csv.string());
}

// ---- generate ---------------------------------------------------------------

struct GenerateCmd {
  std::string out;
  std::string digits;
  std::string colors = "balanced";
  std::size_t count = 70000;
  std::uint64_t seed = 1;
  bool color_utility = false;
  unsigned threads = 0;
  std::string table;
  std::size_t side = 64;
  std::size_t channels = 3;

  void add(CLI::App& root) {
    auto* c = root.add_subcommand("generate", "Write a Colored-MNIST (or ingested image-table) dataset");
    c->add_option("--out", out, "Output VLDS file")->required();
    c->add_option("--digits", digits, "Directory with MNIST IDX files (default: bundled digits)");
    c->add_option("--colors", colors, "'balanced', 'biased' or three probabilities r,g,b");
    c->add_option("--count", count, "Number of images (0 = every source digit)");
    c->add_option("--seed", seed, "Color draw seed");
    c->add_flag("--color-utility", color_utility, "Make color the utility label and the digit sensitive");
    c->add_option("--threads", threads, "Generator threads (default VARLEAK_THREADS or all cores)");
    c->add_option("--table", table, "CSV label table (path,u,s) to ingest instead of generating");
    c->add_option("--side", side, "Ingested image side length");
    c->add_option("--channels", channels, "Ingested channels (1 or 3)");
    c->callback([this] { run(); });
  }

  void run() const {
    data::LabeledDataset ds;
    json summary;
    if (!table.empty()) {
      require_file(table, "label table");
      ds = data::ingest_image_table(table, {side, channels, 0, 0});
      summary["source"] = table;
    } else {
      const auto dist = parse_colors(colors);
      const fs::path dir = digits.empty() ? data::default_digits_dir() : fs::path(digits);
      auto source = data::load_digits_dir(dir);
      if (count > 0 && count != source.size()) source = data::expand_digits(source, count);
      data::ColoredMnistOptions o;
      o.colors = dist;
      o.seed = seed;
      o.color_is_utility = color_utility;
      o.threads = threads > 0 ? threads : experiment::default_workers();
      ds = data::generate_colored_mnist(source, o);
      const auto& color = color_utility ? ds.u : ds.s;
      const auto& digit = color_utility ? ds.s : ds.u;
      const auto chi = data::chi_square_independence(digit, 10, color, 3);
      summary["source"] = dir.string();
      summary["color_marginals"] = data::label_frequencies(color, 3);
      summary["chi_square"] = {{"statistic", chi.statistic}, {"dof", chi.dof}, {"critical_0.999", chi.critical},
                               {"independent", chi.independent()}};
    }
    data::save_dataset(out, ds);
    summary["out"] = out;
    summary["count"] = ds.size();
    summary["shape"] = ds.input_shape();
    summary["u_classes"] = ds.u_classes;
    summary["s_classes"] = ds.s_classes;
    std::cout << summary.dump(2) << '\n';
  }
};

// ---- pretrain / train -------------------------------------------------------

struct PretrainCmd {
  std::string data_file;
  std::string out;
  TrainFlags flags;

  void add(CLI::App& root) {
    auto* c = root.add_subcommand("pretrain", "Warm up encoder and utility decoder; write a checkpoint");
    c->add_option("--data", data_file, "VLDS dataset")->required();
    c->add_option("--out", out, "Output checkpoint")->required();
    flags.add(c);
    c->callback([this] { run(); });
  }

  void run() const {
    const auto cfg = flags.resolve();
    require_file(data_file, "dataset");
    const auto splits = data::split(data::load_dataset(data_file), cfg.split, cfg.split_seed);
    auto bundle = train::make_bundle(cfg, splits.train);
    const auto floored = train::pretrain(bundle, splits.train, cfg);
    bundle.save(out);
    std::cout << json{{"out", out},
                      {"warmup_iterations", cfg.warmup.iterations},
                      {"floored_labels", floored},
                      {"util_acc_val", train::utility_accuracy(bundle, splits.val, cfg.seed)}}
                     .dump(2)
              << '\n';
  }
};

struct TrainCmd {
  std::string data_file;
  std::string out;
  std::string init;
  TrainFlags flags;

  void add(CLI::App& root) {
    auto* c = root.add_subcommand("train", "Run warm-up and the five-block training loop");
    c->add_option("--data", data_file, "VLDS dataset")->required();
    c->add_option("--out", out, "Output directory (model.vlmb, metrics.csv, config.json)")->required();
    c->add_option("--init", init, "Start from this checkpoint and skip the warm-up");
    flags.add(c);
    c->callback([this] { run(); });
  }

  void run() const {
    const auto cfg = flags.resolve();
    require_file(data_file, "dataset");
    const auto splits = data::split(data::load_dataset(data_file), cfg.split, cfg.split_seed);
    std::optional<models::ModelBundle> start;
    if (!init.empty()) {
      require_file(init, "checkpoint");
      start = models::ModelBundle::load(init);
      check_compatible(*start, splits.train, cfg.d_z);
    }

    const fs::path dir(out);
    fs::create_directories(dir);
    write_text(dir / "config.json", train::to_json(cfg).dump(2) + "\n");
    train::TrainOutputs outputs{dir / "metrics.csv", std::nullopt, false};
    if (cfg.checkpoint_every > 0) outputs.checkpoint_dir = dir / "checkpoints";
    const auto result = start ? train::train(cfg, std::move(*start), splits, outputs) : train::train(cfg, splits, outputs);
    result.bundle.save(dir / "model.vlmb");
    const auto& last = result.metrics.back();
    std::cout << json{{"out", dir.string()},
                      {"iterations", result.iterations_run},
                      {"early_stopped", result.early_stopped},
                      {"floored_labels", result.floored},
                      {"util_acc", {{"train", last.util_acc_train}, {"val", last.util_acc_val}, {"test", last.util_acc_test}}},
                      {"kl_upper", last.kl_upper},
                      {"kl_correction", last.kl_correction}}
                     .dump(2)
              << '\n';
  }
};

// ---- attack / estimate-mi ---------------------------------------------------

struct EvalInputs {
  models::ModelBundle bundle;
  data::SplitResult splits;
  double beta;
};

EvalInputs load_eval(const std::string& checkpoint, const std::string& data_file, std::optional<std::size_t> dz,
                     std::optional<double> beta) {
  require_file(checkpoint, "checkpoint");
  require_file(data_file, "dataset");
  const auto saved = sibling_config(checkpoint);
  const auto cfg = saved.value_or(train::TrainConfig{});
  auto bundle = models::ModelBundle::load(checkpoint);
  auto ds = data::load_dataset(data_file);
  check_compatible(bundle, ds, dz);
  const double b = beta ? *beta : (saved ? saved->beta : std::nan(""));
  return {std::move(bundle), data::split(ds, cfg.split, cfg.split_seed), b};
}

struct AttackCmd {
  std::string checkpoint;
  std::string data_file;
  std::string ratios = "0.1,0.5,1.0";
  std::string out;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  std::optional<std::size_t> dz;
  std::optional<double> beta;

  void add(CLI::App& root) {
    auto* c = root.add_subcommand("attack", "Train the inference adversary on a frozen encoder");
    c->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    c->add_option("--data", data_file, "VLDS dataset the model was trained on")->required();
    c->add_option("--ratios", ratios, "Comma-separated data ratios in (0, 1]");
    c->add_option("--out", out, "CSV file to append rows to")->required();
    c->add_option("--epochs", epochs, "Adversary epochs");
    c->add_option("--seed", seed, "Adversary seed");
    c->add_option("--dz", dz, "Expected latent dimension");
    c->add_option("--beta", beta, "Beta label for the rows (default: from config.json beside the checkpoint)");
    c->callback([this] { run(); });
  }

  void run() const {
    const auto grid = parse_list(ratios, "ratio");
    for (double r : grid) {
      if (!(r > 0.0 && r <= 1.0)) throw ConfigError("data ratios must lie in (0, 1]");
    }
    if (epochs == 0) throw ConfigError("--epochs must be positive");
    const auto in = load_eval(checkpoint, data_file, dz, beta);
    const auto c = leakage::complexity_estimate(in.bundle, in.splits.test, core::derive_seed(seed, 0xC0));
    std::vector<std::string> rows;
    json report = json::array();
    for (double r : grid) {
      leakage::AttackConfig a;
      a.data_ratio = r;
      a.epochs = epochs;
      a.seed = seed;
      const auto res = leakage::train_adversary(in.bundle, in.splits.train, in.splits.test, a);
      rows.push_back(num(in.beta) + "," + std::to_string(in.bundle.dims().d_z) + "," + num(r) + "," +
                     num(res.accuracy) + "," + num(res.xent) + ",,," + num(c.kl_upper) + "," + num(c.correction));
      report.push_back({{"data_ratio", r}, {"adv_acc", res.accuracy}, {"adv_xent", res.xent},
                        {"train_examples", res.train_examples}, {"warnings", res.warnings}});
    }
    append_rows(out, rows);
    std::cout << report.dump(2) << '\n';
  }
};

struct EstimateCmd {
  std::string checkpoint;
  std::string data_file;
  std::string synthetic;
  std::string out;
  double rho = 0.9;
  std::size_t samples = 10000;
  std::size_t steps = 5000;
  std::uint64_t seed = 0;
  std::optional<std::size_t> dz;
  std::optional<double> beta;

  void add(CLI::App& root) {
    auto* c = root.add_subcommand("estimate-mi", "MINE estimates of I(S;Z) and I(U;Z), or on a synthetic pair");
    c->add_option("--checkpoint", checkpoint, "Model checkpoint");
    c->add_option("--data", data_file, "VLDS dataset");
    c->add_option("--synthetic", synthetic, "Synthetic source instead of a model")
        ->check(CLI::IsMember({"independent", "gaussian", "four-class"}));
    c->add_option("--rho", rho, "Correlation of the synthetic Gaussian pair");
    c->add_option("--samples", samples, "Sample count");
    c->add_option("--steps", steps, "MINE training steps");
    c->add_option("--seed", seed, "Seed");
    c->add_option("--dz", dz, "Expected latent dimension");
    c->add_option("--beta", beta, "Beta label for the row");
    c->add_option("--out", out, "CSV file to append a row to (model mode)");
    c->callback([this] { run(); });
  }

  void run() const {
    if (samples < 2 || steps == 0) throw ConfigError("--samples must be at least 2 and --steps positive");
    leakage::MineConfig m;
    m.steps = steps;
    m.seed = seed;
    if (!synthetic.empty()) {
      if (!checkpoint.empty() || !data_file.empty()) throw ConfigError("--synthetic excludes --checkpoint/--data");
      if (!(std::abs(rho) < 1.0)) throw ConfigError("--rho must lie in (-1, 1)");
      core::Rng rng(core::derive_seed(seed, 0x5E));
      core::Tensor z({samples, 1});
      core::Tensor a;
      double truth = 0.0;
      if (synthetic == "four-class") {
        std::vector<std::size_t> labels(samples);
        for (std::size_t i = 0; i < samples; ++i) {
          labels[i] = rng.index(4);
          z[i] = 3.0 * static_cast<double>(labels[i]) + rng.uniform(-1.0, 1.0);
        }
        a = models::one_hot(labels, 4);
        truth = std::log(4.0);
      } else {
        const double r = synthetic == "gaussian" ? rho : 0.0;
        a = core::Tensor({samples, 1});
        for (std::size_t i = 0; i < samples; ++i) {
          z[i] = rng.normal();
          a[i] = r * z[i] + std::sqrt(1.0 - r * r) * rng.normal();
        }
        truth = r == 0.0 ? 0.0 : -0.5 * std::log(1.0 - r * r);
      }
      const auto e = leakage::mine_estimate(z, a, m);
      std::cout << json{{"source", synthetic}, {"mine", e.value}, {"analytic", truth}, {"samples", samples},
                        {"steps", steps}, {"warnings", e.warnings}}
                       .dump(2)
                << '\n';
      return;
    }
    if (checkpoint.empty() || data_file.empty()) throw ConfigError("need --checkpoint and --data (or --synthetic)");
    const auto in = load_eval(checkpoint, data_file, dz, beta);
    const auto& test = in.splits.test;
    const auto idx = leakage::all_indices(test, samples);
    const auto post = leakage::posterior_of(in.bundle, test, idx);
    core::Rng rng(core::derive_seed(seed, 0x313E));
    const auto z = gauss::reparam_sample(post, rng.normal_tensor(post.mu.shape()));
    const auto sz = leakage::mine_estimate(z, models::one_hot(test.s_labels(idx), test.s_classes), m);
    m.seed = core::derive_seed(seed, 1);
    const auto uz = leakage::mine_estimate(z, models::one_hot(test.u_labels(idx), test.u_classes), m);
    const auto c = leakage::complexity_estimate(in.bundle, test, core::derive_seed(seed, 0xC0));
    if (!out.empty()) {
      append_rows(out, {num(in.beta) + "," + std::to_string(in.bundle.dims().d_z) + ",,,," + num(sz.value) + "," +
                        num(uz.value) + "," + num(c.kl_upper) + "," + num(c.correction)});
    }
    std::cout << json{{"mi_sz_mine", sz.value}, {"mi_uz_mine", uz.value}, {"kl_upper", c.kl_upper},
                      {"kl_correction", c.correction}, {"corrected", c.corrected}, {"samples", idx.size()}}
                     .dump(2)
              << '\n';
  }
};

// ---- oracle -----------------------------------------------------------------

struct OracleCmd {
  std::size_t instances = 1000;
  std::size_t max_alphabet = 8;
  std::uint64_t seed = 0;
  std::string table;
  std::size_t rows = 0;

  void add(CLI::App& root) {
    auto* c = root.add_subcommand("oracle", "Exact discrete information checks");
    c->add_option("--instances", instances, "Random Markov instances to check");
    c->add_option("--max-alphabet", max_alphabet, "Largest alphabet size (<= 32)");
    c->add_option("--seed", seed, "Seed");
    c->add_option("--table", table, "Joint table p(a,b), row-major, to evaluate I(A;B)");
    c->add_option("--rows", rows, "Rows of --table");
    c->callback([this] { run(); });
  }

  void run() const {
    if (!table.empty()) {
      const auto p = parse_list(table, "probability");
      if (rows == 0 || p.size() % rows != 0) throw ConfigError("--rows must divide the table size");
      const auto mi = leakage::mutual_information(p, rows, p.size() / rows);
      std::cout << json{{"nats", mi.nats}, {"bits", mi.bits()}}.dump(2) << '\n';
      return;
    }
    if (max_alphabet == 0 || max_alphabet > 32) throw ConfigError("--max-alphabet must be in 1..32");
    core::Rng rng(seed);
    auto simplex = [&rng](std::size_t n) {
      std::vector<double> v(n);
      double s = 0.0;
      for (auto& x : v) s += (x = -std::log(1.0 - rng.uniform()));
      for (auto& x : v) x /= s;
      return v;
    };
    double worst_residual = 0.0;
    double worst_margin = INFINITY;
    for (std::size_t t = 0; t < instances; ++t) {
      const std::size_t ns = 1 + rng.index(max_alphabet), nx = 1 + rng.index(max_alphabet),
                        nz = 1 + rng.index(max_alphabet);
      const auto psx = simplex(ns * nx);
      std::vector<double> ch;
      for (std::size_t x = 0; x < nx; ++x) {
        const auto row = simplex(nz);
        ch.insert(ch.end(), row.begin(), row.end());
      }
      const auto r = leakage::markov_identity_check(psx, ns, nx, ch, nz);
      worst_residual = std::max(worst_residual, std::abs(r.residual));
      worst_margin = std::min(worst_margin, r.dpi_margin);
    }
    const bool pass = worst_residual <= 1e-10 && worst_margin >= -1e-10;
    std::cout << json{{"instances", instances}, {"max_abs_residual", worst_residual},
                      {"min_dpi_margin", worst_margin}, {"pass", pass}}
                     .dump(2)
              << '\n';
    if (!pass) throw NonFiniteError("discrete identities violated");
  }
};

// ---- sweep / report ---------------------------------------------------------

struct SweepCmd {
  std::string spec;
  unsigned workers = 0;

  void add(CLI::App& root) {
    auto* c = root.add_subcommand("sweep", "Run a beta x d_z x seed grid; resumable");
    c->add_option("--spec", spec, "Sweep spec (JSON)")->required();
    c->add_option("--workers", workers, "Parallel workers (default VARLEAK_THREADS or all cores)");
    c->callback([this] { run(); });
  }

  void run() const {
    require_file(spec, "sweep spec");
    const auto s = experiment::sweep_from_json(read_json(spec));
    const auto summary = experiment::run_sweep(s, workers > 0 ? workers : experiment::default_workers(),
                                               [](const std::string& line) { std::cerr << line << '\n'; });
    std::cout << json{{"ran", summary.ran}, {"skipped", summary.skipped}, {"failed", summary.failed},
                      {"records", (s.output_dir / "records.ndjson").string()}}
                     .dump(2)
              << '\n';
  }
};

struct ReportCmd {
  std::string records;
  std::string out;

  void add(CLI::App& root) {
    auto* c = root.add_subcommand("report", "Rewrite plot-ready CSVs from a records file");
    c->add_option("--records", records, "records.ndjson")->required();
    c->add_option("--out", out, "Output directory")->required();
    c->callback([this] { run(); });
  }

  void run() const {
    require_file(records, "records file");
    const auto rs = experiment::RecordFile(records).load();
    experiment::write_reports(rs, out);
    std::cout << json{{"records", rs.size()}, {"out", out}}.dump(2) << '\n';
  }
};

int fail(const char* kind, const std::string& message, int code) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational leakage experiments"};
  app.require_subcommand(1);
  GenerateCmd generate;
  PretrainCmd pretrain;
  TrainCmd train_cmd;
  AttackCmd attack;
  EstimateCmd estimate;
  OracleCmd oracle;
  SweepCmd sweep;
  ReportCmd report;
  generate.add(app);
  pretrain.add(app);
  train_cmd.add(app);
  attack.add(app);
  estimate.add(app);
  oracle.add(app);
  sweep.add(app);
  report.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), kExitValidation);
  } catch (const ConfigError& e) {
    return fail("validation", e.what(), kExitValidation);
  } catch (const UsageError& e) {
    return fail("validation", e.what(), kExitValidation);
  } catch (const FormatError& e) {
    if (e.kind() == FormatError::Kind::kIo) return fail("io", e.what(), kExitRuntime);
    return fail("format", e.what(), kExitValidation);
  } catch (const NonFiniteError& e) {
    return fail("non_finite", e.what(), kExitRuntime);
  } catch (const std::exception& e) {
    return fail("runtime", e.what(), kExitRuntime);
  }
  return 0;
}
