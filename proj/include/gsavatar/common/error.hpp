#pragma once

#include <stdexcept>
#include <string>

namespace gsavatar {

/// Error categories surfaced to callers and, through the CLI, to scripts.
enum class ErrorCode {
  InvalidArgument,
  LengthMismatch,
  NonFinite,
  DegenerateConfiguration,
  CapacityExceeded,
  OutOfBounds,
  Io,
  Parse,
  Divergence,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::LengthMismatch: return "length_mismatch";
    case ErrorCode::NonFinite: return "non_finite";
    case ErrorCode::DegenerateConfiguration: return "degenerate_configuration";
    case ErrorCode::CapacityExceeded: return "capacity_exceeded";
    case ErrorCode::OutOfBounds: return "out_of_bounds";
    case ErrorCode::Io: return "io";
    case ErrorCode::Parse: return "parse";
    case ErrorCode::Divergence: return "divergence";
  }
  return "unknown";
}

}  // namespace gsavatar
