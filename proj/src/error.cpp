#include "morphorisk/error.hpp"

namespace morphorisk {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingVertebra: return "MissingVertebra";
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kMissingDemographic: return "MissingDemographic";
    case ErrorCode::kMissingStats: return "MissingStats";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kSingularInformation: return "SingularInformation";
    case ErrorCode::kSeparation: return "Separation";
    case ErrorCode::kNoEvents: return "NoEvents";
    case ErrorCode::kConstantColumn: return "ConstantColumn";
    case ErrorCode::kColumnMismatch: return "ColumnMismatch";
    case ErrorCode::kDegenerateGroups: return "DegenerateGroups";
    case ErrorCode::kOneClass: return "OneClass";
    case ErrorCode::kNoUsablePairs: return "NoUsablePairs";
    case ErrorCode::kZeroCensoringWeight: return "ZeroCensoringWeight";
    case ErrorCode::kTooManyDegenerate: return "TooManyDegenerate";
    case ErrorCode::kAllRowsFailed: return "AllRowsFailed";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kTruncatedFile: return "TruncatedFile";
    case ErrorCode::kIllegalLabel: return "IllegalLabel";
    case ErrorCode::kNonPositiveSpacing: return "NonPositiveSpacing";
    case ErrorCode::kSchemaMismatch: return "SchemaMismatch";
    case ErrorCode::kBinMismatch: return "BinMismatch";
    case ErrorCode::kRangeViolation: return "RangeViolation";
    case ErrorCode::kConfigInvalid: return "ConfigInvalid";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kMissingUpstream: return "MissingUpstream";
  }
  return "Unknown";
}

}  // namespace morphorisk
