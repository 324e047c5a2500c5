#include "psop/error.h"

namespace psop {

std::string_view ModuleOf(ErrorCode code) {
  switch (static_cast<int>(code) / 10) {
    case 0:
      return "cli";
    case 1:
      return "stream_model";
    case 2:
      return "affinity_engine";
    case 3:
      return "piap";
    case 4:
      return "trajectory_builder";
    case 5:
      return "eval_metrics";
    case 6:
      return "synth_stream";
    case 7:
      return "cli_io";
  }
  return "unknown";
}

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kUnsortedRecords: return "unsorted_records";
    case ErrorCode::kInvalidBox: return "invalid_box";
    case ErrorCode::kInvalidConfig: return "invalid_config";
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
    case ErrorCode::kZeroNormEmbedding: return "zero_norm_embedding";
    case ErrorCode::kEmptyInput: return "empty_input";
    case ErrorCode::kPiapStateMismatch: return "piap_state_mismatch";
    case ErrorCode::kSameFrameMembers: return "same_frame_members";
    case ErrorCode::kMetricInput: return "metric_input";
    case ErrorCode::kSynthConfig: return "synth_config";
    case ErrorCode::kIoOpen: return "io_open";
    case ErrorCode::kMalformedJson: return "malformed_json";
    case ErrorCode::kMissingHeader: return "missing_header";
    case ErrorCode::kMissingEmbedding: return "missing_embedding";
    case ErrorCode::kHeaderDimensionMismatch: return "header_dimension_mismatch";
    case ErrorCode::kUnsortedFrames: return "unsorted_frames";
    case ErrorCode::kUnknownClass: return "unknown_class";
    case ErrorCode::kMalformedRecord: return "malformed_record";
    case ErrorCode::kMalformedImage: return "malformed_image";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error("[" + std::string(ModuleOf(code)) + "/" +
                         std::string(ErrorCodeName(code)) + "] " + message),
      code_(code) {}

}  // namespace psop
