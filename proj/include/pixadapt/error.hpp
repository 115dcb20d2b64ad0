#pragma once

#include <stdexcept>
#include <string>

namespace pixadapt {

enum class ErrorCode {
  kMissingFile,
  kIo,
  kBadMagic,
  kTruncated,
  kTrailingData,
  kNonFinite,
  kLabelOutOfRange,
  kDimensionMismatch,
  kInvalidArgument,
  kEmptyRegion,
  kInsufficientData,
  kMalformed,
  kConfig,
};

const char* to_string(ErrorCode code);

/// Base exception for every failure raised by the library. The code lets
/// callers (and the CLI exit-code mapping) distinguish failure kinds without
/// parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Data-side failures: unreadable, malformed, or inconsistent inputs.
bool is_data_error(ErrorCode code);

}  // namespace pixadapt
