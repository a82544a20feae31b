#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace morphorisk {

enum class ErrorCode {
  // volume / score extraction
  kMissingVertebra,
  kOutOfRange,
  kMissingDemographic,
  kMissingStats,
  kInvalidArgument,
  // model fitting
  kSingularInformation,
  kSeparation,
  kNoEvents,
  kConstantColumn,
  kColumnMismatch,
  kDegenerateGroups,
  // metrics
  kOneClass,
  kNoUsablePairs,
  kZeroCensoringWeight,
  kTooManyDegenerate,
  // selection
  kAllRowsFailed,
  // io
  kBadMagic,
  kTruncatedFile,
  kIllegalLabel,
  kNonPositiveSpacing,
  kSchemaMismatch,
  kBinMismatch,
  kRangeViolation,
  kConfigInvalid,
  kIoError,
  kMissingUpstream,
};

std::string_view error_code_name(ErrorCode code);

/// Library-wide exception. The code is stable and tests match on it; the
/// message carries the human-readable context (row numbers, coordinates...).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace morphorisk
