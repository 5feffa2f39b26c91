// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mrgd {

enum class ErrorCode {
  OutOfRange,
  Parse,
  EmptyReferences,
  DimensionMismatch,
  EmbeddingUnavailable,
  EmptyCandidates,
  BackendFailure,
  Transport,
  Schema,
  ServiceReported,
  UnknownPrefix,
  UnknownImage,
  Io,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::OutOfRange: return "OUT_OF_RANGE";
    case ErrorCode::Parse: return "PARSE";
    case ErrorCode::EmptyReferences: return "EMPTY_REFERENCES";
    case ErrorCode::DimensionMismatch: return "DIMENSION_MISMATCH";
    case ErrorCode::EmbeddingUnavailable: return "EMBEDDING_UNAVAILABLE";
    case ErrorCode::EmptyCandidates: return "EMPTY_CANDIDATES";
    case ErrorCode::BackendFailure: return "BACKEND_FAILURE";
    case ErrorCode::Transport: return "TRANSPORT";
    case ErrorCode::Schema: return "SCHEMA";
    case ErrorCode::ServiceReported: return "SERVICE_REPORTED";
    case ErrorCode::UnknownPrefix: return "UNKNOWN_PREFIX";
    case ErrorCode::UnknownImage: return "UNKNOWN_IMAGE";
    case ErrorCode::Io: return "IO";
  }
  return "UNKNOWN";
}

/// Every failure in the library is reported as an Error carrying a code and
/// a detail string (field name, label, line number, ...). Errors that wrap a
/// lower-level failure keep the original code in cause().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string detail,
        std::optional<ErrorCode> cause = std::nullopt)
      : std::runtime_error(std::string(to_string(code)) + "(" + detail + ")"),
        code_(code),
        detail_(std::move(detail)),
        cause_(cause) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }
  std::optional<ErrorCode> cause() const noexcept { return cause_; }

 private:
  ErrorCode code_;
  std::string detail_;
  std::optional<ErrorCode> cause_;
};

/// Configuration and input-parse failures map to exit code 1, everything
/// else (backends, IO, runtime) to 2.
inline bool is_config_error(ErrorCode code) {
  return code == ErrorCode::OutOfRange || code == ErrorCode::Parse;
}

}  // namespace mrgd
