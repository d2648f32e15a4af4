#pragma once

#include <stdexcept>
#include <string>

namespace perfzo {

enum class ErrorKind {
  InvalidDimension,
  InvalidParameter,
  InfeasibleModel,
  OracleFailure,
  OracleUnsupported,
  InsufficientSamples,
  CalibrationMissing,
  CalibrationFailure,
  InsufficientData,
  Unsupported,
  InvalidConfig,
  Io,
};

const char* to_string(ErrorKind kind) noexcept;

/// Exception carrying a machine-checkable kind; the CLI maps kinds to exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace perfzo
