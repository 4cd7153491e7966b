// SPDX-License-Identifier: Apache-2.0
#include "varleak/models/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "varleak/error.hpp"

namespace varleak::models {

namespace {

constexpr char kMagic[4] = {'V', 'L', 'M', 'B'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  const std::vector<char>& data() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(std::vector<char> data, std::string where) : buf_(std::move(data)), where_(std::move(where)) {}
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw FormatError(FormatError::Kind::kTruncated, "truncated checkpoint" + where_);
  }
  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  [[nodiscard]] bool done() const noexcept { return pos_ == buf_.size(); }
  [[nodiscard]] std::size_t remaining() const noexcept { return buf_.size() - pos_; }

 private:
  std::vector<char> buf_;
  std::size_t pos_ = 0;
  std::string where_;
};

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& descriptor,
                      const std::vector<std::pair<std::string, const core::ParamSet*>>& sets) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  const std::string desc = descriptor.dump();
  w.u32(static_cast<std::uint32_t>(desc.size()));
  w.bytes(desc.data(), desc.size());
  std::uint32_t count = 0;
  for (const auto& [prefix, set] : sets) count += static_cast<std::uint32_t>(set->size());
  w.u32(count);
  for (const auto& [prefix, set] : sets) {
    for (const auto& p : *set) {
      const std::string name = prefix + "." + p.name;
      w.u32(static_cast<std::uint32_t>(name.size()));
      w.bytes(name.data(), name.size());
      w.u32(static_cast<std::uint32_t>(p.value.rank()));
      for (auto d : p.value.shape()) w.u64(d);
      for (double v : p.value.values()) w.f64(v);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::kIo, "cannot open " + path.string() + " for writing");
  out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
  if (!out.flush()) throw FormatError(FormatError::Kind::kIo, "write failed for " + path.string());
}

CheckpointContents read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::kIo, "cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = " in " + path.string();
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::kUnrecognized, "unrecognized format (not a model checkpoint)" + where);
  }
  Reader r(std::move(bytes), where);
  (void)r.str(4);
  const auto version = r.uint(4);
  if (version != kCheckpointVersion) {
    throw FormatError(FormatError::Kind::kVersionMismatch,
                      "checkpoint version " + std::to_string(version) + " is not supported" + where);
  }
  CheckpointContents out;
  try {
    out.descriptor = nlohmann::json::parse(r.str(r.uint(4)));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(FormatError::Kind::kCorrupt, std::string("bad checkpoint descriptor: ") + e.what() + where);
  }
  const auto count = r.uint(4);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.str(r.uint(4));
    const auto rank = r.uint(4);
    core::Shape shape;
    std::size_t n = 1;
    for (std::uint64_t k = 0; k < rank; ++k) {
      shape.push_back(r.uint(8));
      n *= shape.back();
    }
    if (n == 0 || n > r.remaining() / 8) throw FormatError(FormatError::Kind::kTruncated, "truncated checkpoint" + where);
    std::vector<double> values(n);
    for (auto& v : values) v = std::bit_cast<double>(r.uint(8));
    out.blobs.emplace(std::move(name), core::Tensor(std::move(shape), std::move(values)));
  }
  if (!r.done()) throw FormatError(FormatError::Kind::kCorrupt, "trailing bytes after checkpoint" + where);
  return out;
}

void restore_params(const CheckpointContents& contents, const std::string& prefix, core::ParamSet& params) {
  for (auto& p : params) {
    const auto it = contents.blobs.find(prefix + "." + p.name);
    if (it == contents.blobs.end()) {
      throw FormatError(FormatError::Kind::kCorrupt, "checkpoint lacks parameter '" + prefix + "." + p.name + "'");
    }
    if (it->second.shape() != p.value.shape()) {
      throw FormatError(FormatError::Kind::kCorrupt, "checkpoint shape mismatch for '" + prefix + "." + p.name + "'");
    }
    p.value = it->second;
  }
}

}  // namespace varleak::models
