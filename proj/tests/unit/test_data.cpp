// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <opencv2/imgcodecs.hpp>

#include "varleak/data/colored_mnist.hpp"
#include "varleak/data/dataset.hpp"
#include "varleak/data/digits.hpp"
#include "varleak/data/discrete.hpp"
#include "varleak/data/ingest.hpp"
#include "varleak/error.hpp"

using namespace varleak;
using namespace varleak::data;
namespace fs = std::filesystem;

namespace {

GrayDigits fake_digits(std::size_t n, std::uint64_t seed) {
  core::Rng rng(seed);
  GrayDigits d;
  d.pixels.resize(n * d.image_bytes());
  d.labels.resize(n);
  for (auto& p : d.pixels) p = static_cast<std::uint8_t>(rng.index(256));
  for (auto& l : d.labels) l = static_cast<std::uint8_t>(rng.index(10));
  return d;
}

fs::path temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "varleak_test_data";
  fs::create_directories(dir);
  return dir / name;
}

const GrayDigits& bundled() {
  static const GrayDigits d = load_digits_dir(default_digits_dir());
  return d;
}

}  // namespace

TEST(Digits, BundledSourceLoads) {
  const auto& d = bundled();
  EXPECT_EQ(d.size(), 10000u);
  EXPECT_EQ(d.rows, 28u);
  std::map<int, int> counts;
  for (auto l : d.labels) ++counts[l];
  EXPECT_EQ(counts.size(), 10u);
}

TEST(Digits, ExpandKeepsPrefixAndShiftsRepeats) {
  const auto src = fake_digits(5, 1);
  const auto out = expand_digits(src, 12);
  ASSERT_EQ(out.size(), 12u);
  EXPECT_TRUE(std::equal(src.pixels.begin(), src.pixels.end(), out.pixels.begin()));
  EXPECT_EQ(out.labels[7], src.labels[2]);
  const auto* second = out.pixels.data() + 7 * 784;
  EXPECT_FALSE(std::equal(second, second + 784, src.pixels.data() + 2 * 784));
  // First repeat is shifted down one row.
  EXPECT_EQ(second[28 * 5 + 3], src.pixels[2 * 784 + 28 * 4 + 3]);
}

TEST(Digits, MissingDirectoryIsIoError) {
  try {
    (void)load_digits_dir(temp_path("nothing-here"));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatError::Kind::kIo);
  }
}

TEST(ColoredMnist, TintPlacesIntensityInOneChannel) {
  const auto src = fake_digits(50, 2);
  const auto ds = generate_colored_mnist(src, {ColorDistribution::balanced(), 3});
  ASSERT_EQ(ds.size(), 50u);
  EXPECT_EQ(ds.channels, 3u);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(ds.u[i], src.labels[i]);
    for (std::size_t p = 0; p < 784; ++p) {
      for (std::size_t c = 0; c < 3; ++c) {
        const auto v = ds.pixels[(i * 784 + p) * 3 + c];
        EXPECT_EQ(v, c == ds.s[i] ? src.pixels[i * 784 + p] : 0);
      }
    }
  }
}

TEST(ColoredMnist, DegenerateDistributionIsAllRed) {
  const auto ds = generate_colored_mnist(fake_digits(200, 4), {{{1.0, 0.0, 0.0}}, 9});
  for (auto s : ds.s) EXPECT_EQ(s, 0);
}

TEST(ColoredMnist, InvalidDistributionRejected) {
  EXPECT_THROW(generate_colored_mnist(fake_digits(5, 1), {{{0.5, 0.5, 0.5}}, 1}), ConfigError);
  EXPECT_THROW(generate_colored_mnist(fake_digits(5, 1), {{{1.5, -0.5, 0.0}}, 1}), ConfigError);
  GrayDigits bad = fake_digits(5, 1);
  bad.pixels.pop_back();
  EXPECT_THROW(generate_colored_mnist(bad, {}), ConfigError);
}

TEST(ColoredMnist, DeterministicAndThreadCountInvariant) {
  const auto src = fake_digits(1000, 5);
  const auto a = generate_colored_mnist(src, {ColorDistribution::biased(), 11, false, 1});
  const auto b = generate_colored_mnist(src, {ColorDistribution::biased(), 11, false, 4});
  EXPECT_EQ(a.pixels, b.pixels);
  EXPECT_EQ(a.s, b.s);
  const auto c = generate_colored_mnist(src, {ColorDistribution::biased(), 12, false, 1});
  EXPECT_NE(a.s, c.s);
}

TEST(ColoredMnist, MarginalsAndIndependenceOnBundledDigits) {
  const auto src = expand_digits(bundled(), 70000);
  for (const auto& dist : {ColorDistribution::balanced(), ColorDistribution::biased()}) {
    const auto ds = generate_colored_mnist(src, {dist, 2024});
    ASSERT_EQ(ds.size(), 70000u);
    const auto freq = label_frequencies(ds.s, 3);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(freq[c], dist.p[c], 0.01);
    const auto chi = chi_square_independence(ds.u, 10, ds.s, 3);
    EXPECT_EQ(chi.dof, 18u);
    EXPECT_TRUE(chi.independent()) << chi.statistic << " vs " << chi.critical;
  }
}

TEST(ColoredMnist, RoleSwapMakesColorTheUtility) {
  const auto ds = generate_colored_mnist(fake_digits(30, 6), {ColorDistribution::balanced(), 1, true});
  EXPECT_EQ(ds.u_classes, 3u);
  EXPECT_EQ(ds.s_classes, 10u);
}

TEST(ChiSquare, DetectsDependence) {
  std::vector<std::uint8_t> a, b;
  for (int i = 0; i < 3000; ++i) {
    a.push_back(static_cast<std::uint8_t>(i % 3));
    b.push_back(static_cast<std::uint8_t>(i % 3));
  }
  EXPECT_FALSE(chi_square_independence(a, 3, b, 3).independent());
  EXPECT_NEAR(chi_square_independence(a, 3, b, 3).critical, 18.4668, 1e-3);  // chi2(4) 0.999 quantile
}

TEST(Discrete, IndependentTableSamplerWithinTotalVariation) {
  const auto joint = DiscreteJoint::product({0.2, 0.8}, {1.0}, {0.1, 0.3, 0.6});
  JointSampler sample(joint, 3);
  std::vector<double> counts(6, 0.0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto t = sample();
    counts[t.s * 3 + t.x] += 1.0;
  }
  double tv = 0.0;
  const auto sx = joint.p_sx();
  for (std::size_t k = 0; k < 6; ++k) tv += 0.5 * std::abs(counts[k] / n - sx[k]);
  EXPECT_LE(tv, 0.01);
}

TEST(Discrete, UniformTwoByTwoCells) {
  const auto joint = DiscreteJoint::from_sx(2, 2, {1, 1, 1, 1});
  JointSampler sample(joint, 8);
  std::vector<double> counts(4, 0.0);
  for (int i = 0; i < 100000; ++i) {
    const auto t = sample();
    counts[t.s * 2 + t.x] += 1.0;
  }
  for (double c : counts) EXPECT_NEAR(c / 100000.0, 0.25, 0.01);
}

TEST(Discrete, CopyChannelEmpiricalInformationIsEntropyOfS) {
  const std::vector<double> ps{0.5, 0.25, 0.25};
  std::vector<double> t(9, 0.0);
  for (std::size_t s = 0; s < 3; ++s) t[s * 3 + s] = ps[s];
  JointSampler sample(DiscreteJoint::from_sx(3, 3, t), 4);
  std::vector<double> joint(9, 0.0), ms(3, 0.0), mx(3, 0.0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto v = sample();
    joint[v.s * 3 + v.x] += 1.0 / n;
    ms[v.s] += 1.0 / n;
    mx[v.x] += 1.0 / n;
  }
  double mi = 0.0;
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t x = 0; x < 3; ++x) {
      if (joint[s * 3 + x] > 0) mi += joint[s * 3 + x] * std::log(joint[s * 3 + x] / (ms[s] * mx[x]));
    }
  }
  EXPECT_NEAR(mi, 1.5 * std::log(2.0), 0.01);
}

TEST(Discrete, RejectsNegativeAndOversized) {
  EXPECT_THROW(DiscreteJoint::from_sx(1, 2, {0.5, -0.1}), ConfigError);
  EXPECT_THROW(DiscreteJoint(65, 1, 1, std::vector<double>(65, 1.0)), ConfigError);
}

class SplitTest : public ::testing::Test {
 protected:
  LabeledDataset ds = generate_colored_mnist(expand_digits(bundled(), 70000), {ColorDistribution::balanced(), 7});
};

TEST_F(SplitTest, ReferenceSizesAndStratification) {
  const SplitFractions f{6.0 / 7.0 * 0.9, 6.0 / 7.0 * 0.1, 1.0 / 7.0};
  const auto idx = split_indices(ds, f, 1);
  EXPECT_EQ(idx.train.size(), 54000u);
  EXPECT_EQ(idx.val.size(), 6000u);
  EXPECT_EQ(idx.test.size(), 10000u);
  std::vector<int> seen(ds.size(), 0);
  for (const auto* part : {&idx.train, &idx.val, &idx.test}) {
    for (auto i : *part) ++seen[i];
  }
  for (int v : seen) ASSERT_EQ(v, 1);

  const auto parts = split(ds, f, 1);
  const auto fu = label_frequencies(ds.u, 10);
  const auto fs_ = label_frequencies(ds.s, 3);
  for (const auto* part : {&parts.train, &parts.val, &parts.test}) {
    const auto pu = label_frequencies(part->u, 10);
    const auto ps = label_frequencies(part->s, 3);
    for (std::size_t c = 0; c < 10; ++c) EXPECT_NEAR(pu[c], fu[c], 0.02);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(ps[c], fs_[c], 0.02);
  }
  EXPECT_EQ(parts.test.split, SplitTag::kTest);
}

TEST_F(SplitTest, DeterministicPerSeedAndRejectsBadFractions) {
  const SplitFractions f{0.7, 0.1, 0.2};
  const auto a = split_indices(ds, f, 5);
  const auto b = split_indices(ds, f, 5);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(split_indices(ds, f, 6).train, a.train);
  EXPECT_THROW(split_indices(ds, {1.0, 0.0, 0.0}, 1), ConfigError);
  EXPECT_THROW(split_indices(ds, {0.5, 0.3, 0.3}, 1), ConfigError);
}

TEST(Container, RoundTripIsBitExact) {
  const auto ds = generate_colored_mnist(fake_digits(37, 9), {ColorDistribution::biased(), 4});
  const auto path = temp_path("roundtrip.vlds");
  save_dataset(path, ds);
  const auto back = load_dataset(path);
  EXPECT_EQ(back.pixels, ds.pixels);
  EXPECT_EQ(back.u, ds.u);
  EXPECT_EQ(back.s, ds.s);
  EXPECT_EQ(back.height, ds.height);
  EXPECT_EQ(back.s_classes, ds.s_classes);
}

TEST(Container, DistinctErrorsForTruncationMagicAndVersion) {
  const auto ds = generate_colored_mnist(fake_digits(4, 9), {});
  const auto path = temp_path("broken.vlds");
  save_dataset(path, ds);
  auto kind_of = [&] {
    try {
      (void)load_dataset(path);
    } catch (const FormatError& e) {
      return e.kind();
    }
    return FormatError::Kind::kIo;
  };
  fs::resize_file(path, fs::file_size(path) - 10);
  EXPECT_EQ(kind_of(), FormatError::Kind::kTruncated);

  save_dataset(path, ds);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const char v2[4] = {2, 0, 0, 0};
    f.write(v2, 4);
  }
  EXPECT_EQ(kind_of(), FormatError::Kind::kVersionMismatch);

  std::ofstream(path, std::ios::binary) << "PNG\x89 not a dataset";
  EXPECT_EQ(kind_of(), FormatError::Kind::kUnrecognized);
  try {
    (void)load_dataset(path);
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("unrecognized format"), std::string::npos);
  }
}

TEST(Features, ScaledToUnitIntervalInChannelMajorOrder) {
  LabeledDataset ds;
  ds.height = 1;
  ds.width = 2;
  ds.channels = 3;
  ds.u_classes = ds.s_classes = 2;
  ds.pixels = {255, 0, 51, 0, 102, 0};
  ds.u = {1};
  ds.s = {0};
  const std::vector<std::size_t> idx{0};
  const auto x = ds.features(idx);
  EXPECT_EQ(x.shape(), (core::Shape{1, 3, 1, 2}));
  EXPECT_DOUBLE_EQ(x[0], 1.0);   // c0, pixel 0
  EXPECT_DOUBLE_EQ(x[1], 0.0);   // c0, pixel 1
  EXPECT_DOUBLE_EQ(x[3], 0.4);   // c1, pixel 1
  EXPECT_DOUBLE_EQ(x[4], 0.2);   // c2, pixel 0
}

TEST(Ingest, CsvTableOfImagesResizedTo64) {
  const auto dir = temp_path("celeb");
  fs::create_directories(dir);
  std::ofstream csv(dir / "labels.csv");
  csv << "path,u,s\n";
  for (int i = 0; i < 4; ++i) {
    cv::Mat img(80, 70, CV_8UC3, cv::Scalar(10 * i, 20, 200));  // BGR
    const auto name = "img" + std::to_string(i) + ".png";
    cv::imwrite((dir / name).string(), img);
    csv << name << "," << (i % 2) << "," << (i / 2) << "\n";
  }
  csv.close();
  const auto ds = ingest_image_table(dir / "labels.csv");
  EXPECT_EQ(ds.size(), 4u);
  EXPECT_EQ(ds.height, 64u);
  EXPECT_EQ(ds.u_classes, 2u);
  EXPECT_EQ(ds.pixels[0], 200);  // red channel first after BGR->RGB
  EXPECT_EQ(ds.pixels[2], 0);
  EXPECT_EQ(ds.s[3], 1);
}

TEST(Ingest, BadHeaderAndMissingImage) {
  const auto dir = temp_path("celeb_bad");
  fs::create_directories(dir);
  std::ofstream(dir / "a.csv") << "file,label\nx.png,1\n";
  EXPECT_THROW(ingest_image_table(dir / "a.csv"), FormatError);
  std::ofstream(dir / "b.csv") << "path,u,s\nmissing.png,0,1\n";
  EXPECT_THROW(ingest_image_table(dir / "b.csv"), FormatError);
}
