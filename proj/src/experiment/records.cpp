// SPDX-License-Identifier: Apache-2.0
#include "varleak/experiment/records.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "varleak/error.hpp"

namespace varleak::experiment {

nlohmann::json to_json(const ExperimentRecord& r) {
  nlohmann::json adv = nlohmann::json::array();
  for (const auto& a : r.adversary) adv.push_back({{"data_ratio", a.data_ratio}, {"acc", a.accuracy}, {"xent", a.xent}});
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"schema", kRecordSchema},
          {"config_hash", r.config_hash},
          {"status", r.ok ? "ok" : "failed"},
          {"error", r.error},
          {"beta", r.beta},
          {"d_z", r.d_z},
          {"seed", r.seed},
          {"util_acc", {{"train", r.util_acc_train}, {"val", r.util_acc_val}, {"test", r.util_acc_test}}},
          {"adversary", adv},
          {"mi_sz", opt(r.mi_sz)},
          {"mi_uz", opt(r.mi_uz)},
          {"complexity", {{"kl_upper", r.kl_upper}, {"correction", r.kl_correction}, {"corrected", r.corrected}}},
          {"wall_seconds", r.wall_seconds}};
}

ExperimentRecord record_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema").get<int>() != kRecordSchema) {
      throw FormatError(FormatError::Kind::kVersionMismatch, "record schema " + j.at("schema").dump());
    }
    ExperimentRecord r;
    r.config_hash = j.at("config_hash").get<std::string>();
    r.ok = j.at("status").get<std::string>() == "ok";
    r.error = j.value("error", "");
    r.beta = j.at("beta").get<double>();
    r.d_z = j.at("d_z").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    const auto& u = j.at("util_acc");
    r.util_acc_train = u.at("train").get<double>();
    r.util_acc_val = u.at("val").get<double>();
    r.util_acc_test = u.at("test").get<double>();
    for (const auto& a : j.at("adversary")) {
      r.adversary.push_back({a.at("data_ratio").get<double>(), a.at("acc").get<double>(), a.at("xent").get<double>()});
    }
    if (!j.at("mi_sz").is_null()) r.mi_sz = j.at("mi_sz").get<double>();
    if (!j.at("mi_uz").is_null()) r.mi_uz = j.at("mi_uz").get<double>();
    const auto& c = j.at("complexity");
    r.kl_upper = c.at("kl_upper").get<double>();
    r.kl_correction = c.at("correction").get<double>();
    r.corrected = c.at("corrected").get<double>();
    r.wall_seconds = j.value("wall_seconds", 0.0);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::kCorrupt, std::string("bad experiment record: ") + e.what());
  }
}

std::string config_hash(const nlohmann::json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void RecordFile::append(const ExperimentRecord& r) const {
  const std::string line = to_json(r).dump() + "\n";
  const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw FormatError(FormatError::Kind::kIo, "cannot open " + path_.string() + ": " + std::strerror(errno));
  ::flock(fd, LOCK_EX);
  std::size_t done = 0;
  while (done < line.size()) {
    const ssize_t n = ::write(fd, line.data() + done, line.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      ::flock(fd, LOCK_UN);
      ::close(fd);
      throw FormatError(FormatError::Kind::kIo, "cannot append to " + path_.string());
    }
    done += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::flock(fd, LOCK_UN);
  ::close(fd);
}

std::vector<ExperimentRecord> RecordFile::load() const {
  std::vector<ExperimentRecord> out;
  std::ifstream in(path_);
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      if (in.peek() == std::char_traits<char>::eof()) break;  // torn tail from a killed writer
      throw FormatError(FormatError::Kind::kCorrupt, "unparseable line in " + path_.string());
    }
    out.push_back(record_from_json(j));
  }
  return out;
}

std::set<std::string> RecordFile::completed() const {
  std::set<std::string> out;
  for (const auto& r : load()) {
    if (r.ok) out.insert(r.config_hash);
  }
  return out;
}

}  // namespace varleak::experiment
