#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace maskpipe {

enum class ErrorCode {
  kSizeMismatch,
  kNegativeRun,
  kInvalidDimensions,
  kDimensionMismatch,
  kTooShort,
  kEmptyInput,
  kInvalidK,
  kEmptySeries,
  kTooFewVideos,
  kBadRatios,
  kOutOfBounds,
  kInvalidPrompt,
  kFrameMismatch,
  kConfigInfeasible,
  kNoSpace,
  kMultiInstance,
  kFormat,
  kIo,
  kPortInUse,
  kWorkspaceMissing,
  kNotFound,
  kInvalidArgument,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace maskpipe
