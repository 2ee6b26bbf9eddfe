#pragma once

#include <stdexcept>
#include <string>

namespace ptec {

/// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Caller broke a documented precondition (dimension mismatch, empty input, ...).
struct ContractViolation : Error {
  explicit ContractViolation(const std::string& msg) : Error(msg) {}
};

/// A computation produced or encountered a non-finite value.
struct NumericalError : Error {
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

/// Config parsing / validation failure.
struct ValidationError : Error {
  explicit ValidationError(const std::string& msg) : Error(msg) {}
};

/// On-disk artifact has a bad magic tag or malformed framing.
struct FormatError : Error {
  explicit FormatError(const std::string& msg) : Error(msg) {}
};

/// On-disk artifact is structurally valid but internally inconsistent.
struct CorruptionError : Error {
  explicit CorruptionError(const std::string& msg) : Error(msg) {}
};

/// On-disk artifact carries a format version this build does not read.
struct VersionError : Error {
  explicit VersionError(const std::string& msg) : Error(msg) {}
};

}  // namespace ptec
