// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

namespace varleak::experiment {

inline constexpr int kRecordSchema = 1;

struct AdversaryPoint {
  double data_ratio = 1.0;
  double accuracy = 0.0;
  double xent = 0.0;
};

/// One sweep point (config, seed). Every field except wall_seconds is a
/// deterministic function of the config.
struct ExperimentRecord {
  std::string config_hash;
  bool ok = true;
  std::string error;
  double beta = 0.0;
  std::size_t d_z = 0;
  std::uint64_t seed = 0;
  double util_acc_train = 0.0;
  double util_acc_val = 0.0;
  double util_acc_test = 0.0;
  std::vector<AdversaryPoint> adversary;
  std::optional<double> mi_sz;
  std::optional<double> mi_uz;
  double kl_upper = 0.0;
  double kl_correction = 0.0;
  double corrected = 0.0;
  double wall_seconds = 0.0;
};

nlohmann::json to_json(const ExperimentRecord& r);
ExperimentRecord record_from_json(const nlohmann::json& j);

/// 64-bit FNV-1a of the compact JSON dump (keys sorted), as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

/// Append-only newline-delimited JSON file guarded by an advisory lock.
class RecordFile {
 public:
  explicit RecordFile(std::filesystem::path path) : path_(std::move(path)) {}

  void append(const ExperimentRecord& r) const;
  /// Every parseable line; a torn final line is ignored.
  [[nodiscard]] std::vector<ExperimentRecord> load() const;
  /// Hashes of successful records.
  [[nodiscard]] std::set<std::string> completed() const;
  [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace varleak::experiment
