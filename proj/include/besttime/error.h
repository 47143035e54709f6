#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace besttime {

enum class ErrorCode {
  kInvalidArgument,
  kEmptyCandidate,
  kDegenerateAssembly,
  kNotFound,
  kConfiguration,
  kUndefinedRatio,
  kOutOfRange,
  kRejected,
  kIo,
  kParse,
};

std::string_view to_string(ErrorCode code);

// All recoverable failures in the library surface as this type. The code is
// stable and appears verbatim in CLI error lines and JSON error records.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace besttime
