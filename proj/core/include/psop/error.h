#ifndef PSOP_ERROR_H_
#define PSOP_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace psop {

// Error codes are grouped by module; the tens digit names the module and the
// CLI uses the numeric value as its process exit code.
enum class ErrorCode : int {
  kInvalidArgument = 2,

  kUnsortedRecords = 10,
  kInvalidBox = 11,
  kInvalidConfig = 12,

  kDimensionMismatch = 20,
  kZeroNormEmbedding = 21,
  kEmptyInput = 22,

  kPiapStateMismatch = 30,

  kSameFrameMembers = 40,

  kMetricInput = 50,

  kSynthConfig = 60,

  kIoOpen = 70,
  kMalformedJson = 71,
  kMissingHeader = 72,
  kMissingEmbedding = 73,
  kHeaderDimensionMismatch = 74,
  kUnsortedFrames = 75,
  kUnknownClass = 76,
  kMalformedRecord = 77,
  kMalformedImage = 78,
};

std::string_view ModuleOf(ErrorCode code);
std::string_view ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const { return code_; }
  int exit_code() const { return static_cast<int>(code_); }

 private:
  ErrorCode code_;
};

}  // namespace psop

#endif  // PSOP_ERROR_H_
