#pragma once

#include <stdexcept>
#include <string>

namespace mmdm {

enum class ErrorKind {
  InvalidInput,
  InvalidConfig,
  InvalidSkeleton,
  BadMagic,
  VersionMismatch,
  Truncated,
  NumericFailure,
  DegenerateSoftmax,
  TrainingFailure,
  Incompatible,
  Io,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), detail_(what) {}

  ErrorKind kind() const { return kind_; }
  /// Message without the kind prefix.
  const std::string& detail() const { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

// Raised by the sampling loop when a step produces NaN/inf.
class NumericFailure : public Error {
 public:
  NumericFailure(int step, const std::string& what)
      : Error(ErrorKind::NumericFailure, "step " + std::to_string(step) + ": " + what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

}  // namespace mmdm
