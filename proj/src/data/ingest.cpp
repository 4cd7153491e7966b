// SPDX-License-Identifier: Apache-2.0
#include "varleak/data/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <sstream>

#include "varleak/error.hpp"

namespace varleak::data {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

struct Row {
  fs::path path;
  int u;
  int s;
};

int parse_label(const std::string& field, const fs::path& csv, std::size_t line) {
  std::size_t used = 0;
  int v = -1;
  try {
    v = std::stoi(field, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != field.size() || v < 0 || v > 255) {
    throw ConfigError(csv.string() + ":" + std::to_string(line) + ": label '" + field + "' is not in 0..255");
  }
  return v;
}

}  // namespace

LabeledDataset ingest_image_table(const fs::path& csv, const IngestOptions& options) {
  if (options.side == 0 || (options.channels != 1 && options.channels != 3)) {
    throw ConfigError("ingestion needs a positive side and 1 or 3 channels");
  }
  std::ifstream in(csv);
  if (!in) throw FormatError(FormatError::Kind::kIo, "cannot open label table " + csv.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != "path,u,s") {
    throw FormatError(FormatError::Kind::kUnrecognized, csv.string() + ": expected header 'path,u,s'");
  }
  std::vector<Row> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(trim(f));
    if (fields.size() != 3) {
      throw ConfigError(csv.string() + ":" + std::to_string(line_no) + ": expected 3 columns");
    }
    fs::path p = fields[0];
    if (p.is_relative()) p = csv.parent_path() / p;
    rows.push_back({p, parse_label(fields[1], csv, line_no), parse_label(fields[2], csv, line_no)});
  }
  if (rows.empty()) throw ConfigError(csv.string() + " lists no images");

  LabeledDataset ds;
  ds.height = ds.width = static_cast<std::uint32_t>(options.side);
  ds.channels = static_cast<std::uint32_t>(options.channels);
  int max_u = 1, max_s = 1;
  for (const auto& r : rows) {
    max_u = std::max(max_u, r.u);
    max_s = std::max(max_s, r.s);
  }
  ds.u_classes = static_cast<std::uint32_t>(options.u_classes ? options.u_classes : max_u + 1);
  ds.s_classes = static_cast<std::uint32_t>(options.s_classes ? options.s_classes : max_s + 1);
  const std::size_t eb = ds.example_bytes();
  ds.pixels.resize(rows.size() * eb);
  const int flag = options.channels == 3 ? cv::IMREAD_COLOR : cv::IMREAD_GRAYSCALE;
  const cv::Size target(static_cast<int>(options.side), static_cast<int>(options.side));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    cv::Mat img = cv::imread(rows[i].path.string(), flag);
    if (img.empty()) throw FormatError(FormatError::Kind::kUnrecognized, "cannot decode image " + rows[i].path.string());
    if (options.channels == 3) cv::cvtColor(img, img, cv::COLOR_BGR2RGB);
    if (img.size() != target) cv::resize(img, img, target, 0, 0, cv::INTER_AREA);
    if (!img.isContinuous()) img = img.clone();
    std::memcpy(ds.pixels.data() + i * eb, img.data, eb);
    ds.u.push_back(static_cast<std::uint8_t>(rows[i].u));
    ds.s.push_back(static_cast<std::uint8_t>(rows[i].s));
  }
  ds.validate();
  return ds;
}

}  // namespace varleak::data
