// SPDX-License-Identifier: Apache-2.0
#include "varleak/data/digits.hpp"

#include <zlib.h>

#include <array>
#include <cstdlib>
#include <cstring>

#include "varleak/error.hpp"

#ifndef VARLEAK_BUNDLED_DIGITS_DIR
#define VARLEAK_BUNDLED_DIGITS_DIR "data/mnist10k"
#endif

namespace varleak::data {

namespace fs = std::filesystem;

namespace {

// gzread passes uncompressed files through unchanged.
std::vector<std::uint8_t> read_maybe_gz(const fs::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (f == nullptr) throw FormatError(FormatError::Kind::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> out;
  std::array<std::uint8_t, 1 << 16> buf{};
  int got = 0;
  while ((got = gzread(f, buf.data(), static_cast<unsigned>(buf.size()))) > 0) {
    out.insert(out.end(), buf.begin(), buf.begin() + got);
  }
  const bool failed = got < 0;
  gzclose(f);
  if (failed) throw FormatError(FormatError::Kind::kCorrupt, "decompression failed for " + path.string());
  return out;
}

std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

fs::path find_variant(const fs::path& dir, const std::string& stem) {
  for (const char* suffix : {"", ".gz"}) {
    fs::path p = dir / (stem + suffix);
    if (fs::exists(p)) return p;
  }
  return {};
}

void append(GrayDigits& dst, const GrayDigits& src) {
  dst.pixels.insert(dst.pixels.end(), src.pixels.begin(), src.pixels.end());
  dst.labels.insert(dst.labels.end(), src.labels.begin(), src.labels.end());
}

}  // namespace

GrayDigits read_idx(const fs::path& images, const fs::path& labels) {
  const auto img = read_maybe_gz(images);
  const auto lab = read_maybe_gz(labels);
  if (img.size() < 16 || be32(img.data()) != 0x00000803) {
    throw FormatError(FormatError::Kind::kUnrecognized, images.string() + " is not an IDX image file");
  }
  if (lab.size() < 8 || be32(lab.data()) != 0x00000801) {
    throw FormatError(FormatError::Kind::kUnrecognized, labels.string() + " is not an IDX label file");
  }
  GrayDigits out;
  const std::size_t n = be32(img.data() + 4);
  out.rows = be32(img.data() + 8);
  out.cols = be32(img.data() + 12);
  if (be32(lab.data() + 4) != n) throw FormatError(FormatError::Kind::kCorrupt, "IDX image and label counts differ");
  if (img.size() < 16 + n * out.image_bytes() || lab.size() < 8 + n) {
    throw FormatError(FormatError::Kind::kTruncated, "truncated IDX data in " + images.string());
  }
  out.pixels.assign(img.begin() + 16, img.begin() + 16 + static_cast<std::ptrdiff_t>(n * out.image_bytes()));
  out.labels.assign(lab.begin() + 8, lab.begin() + 8 + static_cast<std::ptrdiff_t>(n));
  for (auto l : out.labels) {
    if (l > 9) throw FormatError(FormatError::Kind::kCorrupt, "digit label out of range in " + labels.string());
  }
  return out;
}

GrayDigits load_digits_dir(const fs::path& dir) {
  const auto train_img = find_variant(dir, "train-images-idx3-ubyte");
  const auto train_lab = find_variant(dir, "train-labels-idx1-ubyte");
  if (!train_img.empty() && !train_lab.empty()) {
    GrayDigits out = read_idx(train_img, train_lab);
    const auto test_img = find_variant(dir, "t10k-images-idx3-ubyte");
    const auto test_lab = find_variant(dir, "t10k-labels-idx1-ubyte");
    if (!test_img.empty() && !test_lab.empty()) append(out, read_idx(test_img, test_lab));
    return out;
  }
  const auto img = find_variant(dir, "images-idx3-ubyte");
  const auto lab = find_variant(dir, "labels-idx1-ubyte");
  if (img.empty() || lab.empty()) {
    throw FormatError(FormatError::Kind::kIo, "no IDX digit files found in " + dir.string());
  }
  return read_idx(img, lab);
}

fs::path default_digits_dir() {
  if (const char* env = std::getenv("VARLEAK_MNIST_DIR"); env != nullptr && *env != '\0') return env;
  return VARLEAK_BUNDLED_DIGITS_DIR;
}

GrayDigits expand_digits(const GrayDigits& source, std::size_t count) {
  if (source.size() == 0) throw ConfigError("digit source is empty");
  static constexpr std::array<std::array<int, 2>, 12> kShifts{{{1, 0},
                                                               {-1, 0},
                                                               {0, 1},
                                                               {0, -1},
                                                               {1, 1},
                                                               {-1, -1},
                                                               {1, -1},
                                                               {-1, 1},
                                                               {2, 0},
                                                               {-2, 0},
                                                               {0, 2},
                                                               {0, -2}}};
  GrayDigits out;
  out.rows = source.rows;
  out.cols = source.cols;
  const std::size_t ib = source.image_bytes();
  out.pixels.assign(count * ib, 0);
  out.labels.resize(count);
  const int rows = static_cast<int>(source.rows);
  const int cols = static_cast<int>(source.cols);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t k = i % source.size();
    const std::size_t pass = i / source.size();
    out.labels[i] = source.labels[k];
    const std::uint8_t* src = source.pixels.data() + k * ib;
    std::uint8_t* dst = out.pixels.data() + i * ib;
    if (pass == 0) {
      std::memcpy(dst, src, ib);
      continue;
    }
    const auto [dy, dx] = kShifts[(pass - 1) % kShifts.size()];
    for (int r = 0; r < rows; ++r) {
      const int sr = r - dy;
      if (sr < 0 || sr >= rows) continue;
      for (int c = 0; c < cols; ++c) {
        const int sc = c - dx;
        if (sc >= 0 && sc < cols) dst[r * cols + c] = src[sr * cols + sc];
      }
    }
  }
  return out;
}

}  // namespace varleak::data
