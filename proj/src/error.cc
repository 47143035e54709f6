#include "besttime/error.h"

namespace besttime {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return "invalid_argument";
    case ErrorCode::kEmptyCandidate:
      return "empty_candidate";
    case ErrorCode::kDegenerateAssembly:
      return "degenerate_assembly";
    case ErrorCode::kNotFound:
      return "not_found";
    case ErrorCode::kConfiguration:
      return "configuration";
    case ErrorCode::kUndefinedRatio:
      return "undefined_ratio";
    case ErrorCode::kOutOfRange:
      return "out_of_range";
    case ErrorCode::kRejected:
      return "rejected";
    case ErrorCode::kIo:
      return "io";
    case ErrorCode::kParse:
      return "parse";
  }
  return "unknown";
}

}  // namespace besttime
