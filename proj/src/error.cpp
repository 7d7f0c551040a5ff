#include "maskpipe/error.hpp"

namespace maskpipe {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSizeMismatch: return "size_mismatch";
    case ErrorCode::kNegativeRun: return "negative_run";
    case ErrorCode::kInvalidDimensions: return "invalid_dimensions";
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
    case ErrorCode::kTooShort: return "too_short";
    case ErrorCode::kEmptyInput: return "empty_input";
    case ErrorCode::kInvalidK: return "invalid_k";
    case ErrorCode::kEmptySeries: return "empty_series";
    case ErrorCode::kTooFewVideos: return "too_few_videos";
    case ErrorCode::kBadRatios: return "bad_ratios";
    case ErrorCode::kOutOfBounds: return "out_of_bounds";
    case ErrorCode::kInvalidPrompt: return "invalid_prompt";
    case ErrorCode::kFrameMismatch: return "frame_mismatch";
    case ErrorCode::kConfigInfeasible: return "config_infeasible";
    case ErrorCode::kNoSpace: return "no_space";
    case ErrorCode::kMultiInstance: return "multi_instance";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kPortInUse: return "port_in_use";
    case ErrorCode::kWorkspaceMissing: return "workspace_missing";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
  }
  return "unknown";
}

}  // namespace maskpipe
