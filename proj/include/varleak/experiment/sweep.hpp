// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "varleak/data/colored_mnist.hpp"
#include "varleak/data/dataset.hpp"
#include "varleak/experiment/records.hpp"
#include "varleak/leakage/estimators.hpp"
#include "varleak/train/config.hpp"

namespace varleak::experiment {

/// Where the sweep's examples come from: an existing VLDS file, or Colored-MNIST
/// generated from a digit directory.
struct DatasetSpec {
  std::filesystem::path file;
  std::filesystem::path digits_dir;  // empty: default_digits_dir()
  data::ColorDistribution colors;
  bool color_is_utility = false;
  /// Number of digits (0 = the whole source, no expansion).
  std::size_t count = 10000;
  std::uint64_t seed = 1;
};

struct SweepSpec {
  std::vector<double> betas;
  std::vector<std::size_t> dzs;
  DatasetSpec dataset;
  std::vector<double> data_ratios{0.1, 0.5, 1.0};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::filesystem::path output_dir;
  /// beta, d_z and seed are overwritten per point.
  train::TrainConfig train = train::train_preset("mnist-desk");
  leakage::AttackConfig attack;
  /// MINE steps per estimate; 0 skips the MI estimates.
  std::size_t mine_steps = 0;
  std::size_t mine_samples = 10000;

  /// Throws ConfigError on empty grids or out-of-range values.
  void validate() const;
};

nlohmann::json to_json(const DatasetSpec& d);
nlohmann::json to_json(const SweepSpec& s);
SweepSpec sweep_from_json(const nlohmann::json& j);

struct SweepPoint {
  double beta = 0.0;
  std::size_t d_z = 0;
  std::uint64_t seed = 0;
};

/// Grid in (d_z, beta, seed) order.
std::vector<SweepPoint> sweep_points(const SweepSpec& s);
/// Everything that affects the point's results.
nlohmann::json point_config(const SweepSpec& s, const SweepPoint& p);

data::LabeledDataset build_dataset(const DatasetSpec& d);

/// Trains, attacks and estimates one point. Exceptions propagate.
ExperimentRecord run_point(const SweepSpec& s, const SweepPoint& p, const data::SplitResult& splits);

struct SweepSummary {
  std::size_t ran = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
};

/// Runs every point whose hash is not yet recorded as successful, with up to
/// `workers` threads, appending to <output_dir>/records.ndjson; then rewrites
/// the report CSVs. Failed points are recorded and the sweep continues.
SweepSummary run_sweep(const SweepSpec& s, unsigned workers,
                       const std::function<void(const std::string&)>& log = {});

/// attack.csv (one row per record and data ratio) and trend_dz<d>.csv
/// (medians over seeds per beta) into `dir`. Failed records are skipped.
void write_reports(std::span<const ExperimentRecord> records, const std::filesystem::path& dir);

inline constexpr const char* kAttackHeader =
    "beta,dz,data_ratio,adv_acc,adv_xent,mi_sz_mine,mi_uz_mine,kl_upper,kl_correction";

/// VARLEAK_THREADS when set (at least 1), otherwise the hardware concurrency.
unsigned default_workers();

double median(std::vector<double> v);

}  // namespace varleak::experiment
