// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "varleak/error.hpp"
#include "varleak/experiment/sweep.hpp"

using namespace varleak;
using namespace varleak::experiment;

namespace {

ExperimentRecord sample_record(double beta, std::uint64_t seed, double corrected) {
  ExperimentRecord r;
  r.config_hash = config_hash({{"beta", beta}, {"seed", seed}});
  r.beta = beta;
  r.d_z = 8;
  r.seed = seed;
  r.util_acc_test = 0.9;
  r.adversary = {{0.5, 0.4, 1.0}, {1.0, 0.45, 0.9}};
  r.mi_sz = 0.01;
  r.kl_upper = corrected + 1.0;
  r.kl_correction = 1.0;
  r.corrected = corrected;
  return r;
}

std::filesystem::path scratch(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Records, JsonRoundTrip) {
  const auto r = sample_record(0.1, 2, 3.5);
  const auto back = record_from_json(to_json(r));
  EXPECT_EQ(to_json(back), to_json(r));
  EXPECT_FALSE(back.mi_uz.has_value());
  EXPECT_THROW(record_from_json(nlohmann::json{{"schema", 99}}), FormatError);
}

TEST(Records, HashIsStableAndSensitive) {
  const nlohmann::json a{{"beta", 0.1}, {"seed", 1}};
  const nlohmann::json b{{"seed", 1}, {"beta", 0.1}};
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash({{"beta", 0.1}, {"seed", 2}}));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Records, AppendLoadAndTornTail) {
  const auto dir = scratch("varleak_records_test");
  const RecordFile f(dir / "r.ndjson");
  EXPECT_TRUE(f.load().empty());
  f.append(sample_record(0.1, 0, 1.0));
  auto failed = sample_record(0.2, 0, 0.0);
  failed.ok = false;
  f.append(failed);
  {
    std::ofstream out(dir / "r.ndjson", std::ios::app);
    out << "{\"schema\": 1, \"config_h";  // killed mid-write
  }
  const auto all = f.load();
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(f.completed().size(), 1u);
  EXPECT_TRUE(f.completed().contains(sample_record(0.1, 0, 1.0).config_hash));
  std::filesystem::remove_all(dir);
}

TEST(Sweep, SpecValidationAndGrid) {
  nlohmann::json j{{"betas", {0.001, 0.01, 0.1, 0.5, 0.9}}, {"dzs", {8, 64}}, {"output_dir", "x"}};
  const auto s = sweep_from_json(j);
  EXPECT_EQ(sweep_points(s).size(), 30u);
  std::set<std::string> hashes;
  for (const auto& p : sweep_points(s)) hashes.insert(config_hash(point_config(s, p)));
  EXPECT_EQ(hashes.size(), 30u);
  j["betas"] = {1.5};
  EXPECT_THROW(sweep_from_json(j), ConfigError);
  j["betas"] = nlohmann::json::array();
  EXPECT_THROW(sweep_from_json(j), ConfigError);
  j["betas"] = {0.1};
  j["data_ratios"] = {0.0};
  EXPECT_THROW(sweep_from_json(j), ConfigError);
}

TEST(Sweep, PointConfigCoversResultAffectingFields) {
  nlohmann::json j{{"betas", {0.1}}, {"dzs", {8}}, {"output_dir", "a"}};
  const auto s1 = sweep_from_json(j);
  j["output_dir"] = "b";
  const auto s2 = sweep_from_json(j);
  const SweepPoint p{0.1, 8, 0};
  EXPECT_EQ(config_hash(point_config(s1, p)), config_hash(point_config(s2, p)));
  j["dataset"] = {{"colors", "biased"}};
  EXPECT_NE(config_hash(point_config(sweep_from_json(j), p)), config_hash(point_config(s1, p)));
  j["dataset"] = nlohmann::json::object();
  j["train"] = {{"lr", 0.01}};
  EXPECT_NE(config_hash(point_config(sweep_from_json(j), p)), config_hash(point_config(s1, p)));
}

TEST(Reports, MediansPerBetaAndAttackRows) {
  EXPECT_DOUBLE_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_DOUBLE_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  const auto dir = scratch("varleak_report_test");
  std::vector<ExperimentRecord> rs{sample_record(0.001, 0, 5.0), sample_record(0.001, 1, 7.0),
                                   sample_record(0.001, 2, 6.0), sample_record(0.9, 0, 0.5)};
  write_reports(rs, dir);
  std::ifstream trend(dir / "trend_dz8.csv");
  std::string header, row1, row2;
  std::getline(trend, header);
  std::getline(trend, row1);
  std::getline(trend, row2);
  EXPECT_NE(header.find("adv_acc_r0.5,adv_acc_r1"), std::string::npos);
  EXPECT_EQ(row1.rfind("0.001,3,", 0), 0u);
  EXPECT_EQ(row1.substr(row1.rfind(',') + 1), "6");
  EXPECT_EQ(row2.substr(row2.rfind(',') + 1), "0.5");
  std::ifstream attack(dir / "attack.csv");
  std::string line;
  std::getline(attack, line);
  EXPECT_EQ(line, kAttackHeader);
  std::size_t rows = 0;
  while (std::getline(attack, line)) ++rows;
  EXPECT_EQ(rows, 8u);
  std::filesystem::remove_all(dir);
}
