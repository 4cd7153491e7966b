// SPDX-License-Identifier: Apache-2.0
#include "varleak/data/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "varleak/core/rng.hpp"
#include "varleak/error.hpp"

namespace varleak::data {

const char* split_name(SplitTag tag) noexcept {
  switch (tag) {
    case SplitTag::kTrain: return "train";
    case SplitTag::kVal: return "val";
    case SplitTag::kTest: return "test";
    case SplitTag::kAll: break;
  }
  return "all";
}

void LabeledDataset::validate() const {
  if (u_classes < 2 || s_classes < 2) throw ConfigError("dataset needs at least two classes for u and s");
  if (u_classes > 256 || s_classes > 256) throw ConfigError("label alphabets are limited to 256 symbols");
  if (example_bytes() == 0) throw ConfigError("dataset has zero-sized examples");
  if (s.size() != u.size() || pixels.size() != u.size() * example_bytes()) {
    throw ConfigError("dataset arrays disagree on the example count");
  }
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (u[i] >= u_classes || s[i] >= s_classes) {
      throw ConfigError("label out of range at example " + std::to_string(i));
    }
  }
}

core::Tensor LabeledDataset::features(std::span<const std::size_t> indices) const {
  const std::size_t hw = static_cast<std::size_t>(height) * width;
  const std::size_t c = channels;
  core::Tensor out({indices.size(), c, height, width});
  double* dst = out.data();
  for (std::size_t n = 0; n < indices.size(); ++n) {
    const std::uint8_t* src = pixels.data() + indices[n] * example_bytes();
    for (std::size_t p = 0; p < hw; ++p) {
      for (std::size_t ch = 0; ch < c; ++ch) dst[ch * hw + p] = src[p * c + ch] / 255.0;
    }
    dst += c * hw;
  }
  return out;
}

std::vector<std::size_t> LabeledDataset::u_labels(std::span<const std::size_t> indices) const {
  std::vector<std::size_t> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) out[i] = u[indices[i]];
  return out;
}

std::vector<std::size_t> LabeledDataset::s_labels(std::span<const std::size_t> indices) const {
  std::vector<std::size_t> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) out[i] = s[indices[i]];
  return out;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices, SplitTag tag) const {
  LabeledDataset out;
  out.height = height;
  out.width = width;
  out.channels = channels;
  out.u_classes = u_classes;
  out.s_classes = s_classes;
  out.split = tag;
  const std::size_t eb = example_bytes();
  out.pixels.resize(indices.size() * eb);
  out.u.resize(indices.size());
  out.s.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t k = indices[i];
    if (k >= size()) throw ConfigError("subset index out of range");
    std::memcpy(out.pixels.data() + i * eb, pixels.data() + k * eb, eb);
    out.u[i] = u[k];
    out.s[i] = s[k];
  }
  return out;
}

LabeledDataset LabeledDataset::with_roles_swapped() const {
  LabeledDataset out = *this;
  std::swap(out.u, out.s);
  std::swap(out.u_classes, out.s_classes);
  return out;
}

SplitIndices split_indices(const LabeledDataset& ds, const SplitFractions& f, std::uint64_t seed) {
  const std::array<double, 3> frac{f.train, f.val, f.test};
  for (double v : frac) {
    if (!(v > 0.0)) throw ConfigError("split fractions must all be positive");
  }
  if (std::abs(frac[0] + frac[1] + frac[2] - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  const std::size_t n = ds.size();

  // Group by stratum, shuffle inside each group, then deal the concatenated
  // list out to the split that lags its quota the most.
  const std::size_t strata = static_cast<std::size_t>(ds.u_classes) * ds.s_classes;
  std::vector<std::vector<std::size_t>> groups(strata);
  for (std::size_t i = 0; i < n; ++i) groups[ds.u[i] * ds.s_classes + ds.s[i]].push_back(i);
  core::Rng rng(core::derive_seed(seed, 0x5b1172));
  std::array<std::vector<std::size_t>, 3> out;
  std::array<std::size_t, 3> assigned{0, 0, 0};
  std::size_t k = 0;
  for (auto& g : groups) {
    std::shuffle(g.begin(), g.end(), rng.engine());
    for (std::size_t idx : g) {
      ++k;
      std::size_t best = 0;
      double best_deficit = -1e300;
      for (std::size_t j = 0; j < 3; ++j) {
        const double deficit = frac[j] * static_cast<double>(k) - static_cast<double>(assigned[j]);
        if (deficit > best_deficit + 1e-9) {
          best_deficit = deficit;
          best = j;
        }
      }
      ++assigned[best];
      out[best].push_back(idx);
    }
  }
  for (std::size_t j = 0; j < 3; ++j) {
    if (out[j].empty()) throw ConfigError("split would leave an empty partition");
    std::sort(out[j].begin(), out[j].end());
  }
  return {std::move(out[0]), std::move(out[1]), std::move(out[2])};
}

SplitResult split(const LabeledDataset& ds, const SplitFractions& fractions, std::uint64_t seed) {
  const auto idx = split_indices(ds, fractions, seed);
  return {ds.subset(idx.train, SplitTag::kTrain), ds.subset(idx.val, SplitTag::kVal),
          ds.subset(idx.test, SplitTag::kTest)};
}

namespace {

constexpr char kMagic[4] = {'V', 'L', 'D', 'S'};
constexpr std::size_t kHeaderBytes = 4 + 7 * 4;

void put_u32(std::vector<char>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

}  // namespace

void save_dataset(const std::filesystem::path& path, const LabeledDataset& ds) {
  ds.validate();
  std::vector<char> header(kMagic, kMagic + 4);
  put_u32(header, kDatasetVersion);
  put_u32(header, static_cast<std::uint32_t>(ds.size()));
  for (std::uint32_t v : {ds.height, ds.width, ds.channels, ds.u_classes, ds.s_classes}) put_u32(header, v);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::kIo, "cannot open " + path.string() + " for writing");
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  const std::size_t eb = ds.example_bytes();
  std::vector<char> record(eb + 2);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::memcpy(record.data(), ds.pixels.data() + i * eb, eb);
    record[eb] = static_cast<char>(ds.u[i]);
    record[eb + 1] = static_cast<char>(ds.s[i]);
    out.write(record.data(), static_cast<std::streamsize>(record.size()));
  }
  if (!out.flush()) throw FormatError(FormatError::Kind::kIo, "write failed for " + path.string());
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::kIo, "cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = " in " + path.string();
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::kUnrecognized, "unrecognized format (bad magic bytes)" + where);
  }
  if (bytes.size() < kHeaderBytes) throw FormatError(FormatError::Kind::kTruncated, "truncated container header" + where);
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kDatasetVersion) {
    throw FormatError(FormatError::Kind::kVersionMismatch,
                      "container version " + std::to_string(version) + " is not supported" + where);
  }
  LabeledDataset ds;
  const std::uint32_t count = get_u32(bytes.data() + 8);
  ds.height = get_u32(bytes.data() + 12);
  ds.width = get_u32(bytes.data() + 16);
  ds.channels = get_u32(bytes.data() + 20);
  ds.u_classes = get_u32(bytes.data() + 24);
  ds.s_classes = get_u32(bytes.data() + 28);
  const std::size_t eb = ds.example_bytes();
  const std::size_t need = kHeaderBytes + static_cast<std::size_t>(count) * (eb + 2);
  if (bytes.size() < need) {
    throw FormatError(FormatError::Kind::kTruncated, "truncated container: expected " + std::to_string(need) +
                                                         " bytes, found " + std::to_string(bytes.size()) + where);
  }
  if (bytes.size() > need) throw FormatError(FormatError::Kind::kCorrupt, "trailing bytes after container" + where);
  ds.pixels.resize(count * eb);
  ds.u.resize(count);
  ds.s.resize(count);
  const char* p = bytes.data() + kHeaderBytes;
  for (std::size_t i = 0; i < count; ++i, p += eb + 2) {
    std::memcpy(ds.pixels.data() + i * eb, p, eb);
    ds.u[i] = static_cast<std::uint8_t>(p[eb]);
    ds.s[i] = static_cast<std::uint8_t>(p[eb + 1]);
  }
  try {
    ds.validate();
  } catch (const ConfigError& e) {
    throw FormatError(FormatError::Kind::kCorrupt, std::string(e.what()) + where);
  }
  return ds;
}

}  // namespace varleak::data
