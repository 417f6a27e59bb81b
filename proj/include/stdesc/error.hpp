#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stdesc {

enum class ErrorCode {
  InvalidArgument,
  DegenerateInput,
  IoError,
  MalformedRecord,
  UnsupportedFormat,
  EmptyInput,
  NonPositiveLeaf,
  NoBoundary,
  DuplicateFrame,
  NoValidTransform,
  EmptyPlaneList,
  InsufficientOverlap,
  ConfigError,
  NoGroundTruth,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NonPositiveLeaf: return "NonPositiveLeaf";
    case ErrorCode::NoBoundary: return "NoBoundary";
    case ErrorCode::DuplicateFrame: return "DuplicateFrame";
    case ErrorCode::NoValidTransform: return "NoValidTransform";
    case ErrorCode::EmptyPlaneList: return "EmptyPlaneList";
    case ErrorCode::InsufficientOverlap: return "InsufficientOverlap";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::NoGroundTruth: return "NoGroundTruth";
  }
  return "Unknown";
}

/// Exception carrying a machine-readable error code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace stdesc
