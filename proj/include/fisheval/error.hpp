#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fisheval {

enum class ErrorCode {
  InvalidModel,
  InvalidDistance,
  OutOfCircle,
  OutOfRange,
  ModelMismatch,
  MissingFile,
  DimensionMismatch,
  BadPoseRecord,
  CorruptFile,
  UnknownEncoding,
  VersionMismatch,
  TruncatedFile,
  ImageTooSmall,
  EmptyInput,
  TypeMismatch,
  UnsupportedMetric,
  MissingDistanceMap,
  ZeroDetections,
  OutOfDomain,
  Degenerate,
  TooFewMatches,
  NoModel,
  TooFewRuns,
  BadConfig,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (and tests) can dispatch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fisheval
