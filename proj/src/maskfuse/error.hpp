#ifndef MASKFUSE_ERROR_HPP_
#define MASKFUSE_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace maskfuse {

enum class ErrorCode {
  kInvalidArgument = 1,
  kFormat,
  kValidation,
  kRange,
  kData,
  kDimension,
  kConfig,
  kContract,
  kUndefinedMetric,
  kDivergence,
  kIo,
  kInternal,
};

std::string_view ErrorCodeName(ErrorCode code);

// Every failure inside the core surfaces as an Error; the C API maps the code
// one-to-one onto mf_status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void Fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void Require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) Fail(code, message);
}

}  // namespace maskfuse

#endif  // MASKFUSE_ERROR_HPP_
