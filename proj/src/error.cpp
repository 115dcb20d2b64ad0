#include "pixadapt/error.hpp"

namespace pixadapt {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingFile: return "missing file";
    case ErrorCode::kIo: return "i/o failure";
    case ErrorCode::kBadMagic: return "bad magic";
    case ErrorCode::kTruncated: return "truncated payload";
    case ErrorCode::kTrailingData: return "trailing data";
    case ErrorCode::kNonFinite: return "non-finite value";
    case ErrorCode::kLabelOutOfRange: return "label out of range";
    case ErrorCode::kDimensionMismatch: return "dimension mismatch";
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kEmptyRegion: return "empty region";
    case ErrorCode::kInsufficientData: return "insufficient data";
    case ErrorCode::kMalformed: return "malformed file";
    case ErrorCode::kConfig: return "configuration error";
  }
  return "unknown";
}

bool is_data_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingFile:
    case ErrorCode::kIo:
    case ErrorCode::kBadMagic:
    case ErrorCode::kTruncated:
    case ErrorCode::kTrailingData:
    case ErrorCode::kNonFinite:
    case ErrorCode::kLabelOutOfRange:
    case ErrorCode::kDimensionMismatch:
    case ErrorCode::kMalformed:
      return true;
    default:
      return false;
  }
}

}  // namespace pixadapt
