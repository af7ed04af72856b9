// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace vg3s {

/// Tensor extents or channel counts that do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A non-finite value where finite values are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FormatErrorKind {
  kMagicMismatch,
  kVersionMismatch,
  kTruncated,
  kDimensionOverflow,
  kMalformed,
};

/// Binary file whose header or payload does not match the expected layout.
class FormatError : public IoError {
 public:
  FormatError(FormatErrorKind kind, const std::string& what) : IoError(what), kind_(kind) {}
  FormatErrorKind kind() const noexcept { return kind_; }

 private:
  FormatErrorKind kind_;
};

}  // namespace vg3s
