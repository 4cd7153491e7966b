// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace varleak {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user-supplied configuration, shapes or arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// API called out of order (e.g. backward without a recorded forward).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A loss or gradient became NaN/Inf.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Problems reading or writing on-disk containers.
class FormatError : public Error {
 public:
  enum class Kind { kUnrecognized, kTruncated, kVersionMismatch, kIo, kCorrupt };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  [[nodiscard]] Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace varleak
