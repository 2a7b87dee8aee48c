#include "mmdm/error.hpp"

namespace mmdm {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid input";
    case ErrorKind::InvalidConfig: return "invalid config";
    case ErrorKind::InvalidSkeleton: return "invalid skeleton";
    case ErrorKind::BadMagic: return "bad magic";
    case ErrorKind::VersionMismatch: return "version mismatch";
    case ErrorKind::Truncated: return "truncated payload";
    case ErrorKind::NumericFailure: return "numeric failure";
    case ErrorKind::DegenerateSoftmax: return "degenerate softmax";
    case ErrorKind::TrainingFailure: return "training failure";
    case ErrorKind::Incompatible: return "incompatible";
    case ErrorKind::Io: return "io error";
  }
  return "error";
}

}  // namespace mmdm
