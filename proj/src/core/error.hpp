#pragma once

#include <stdexcept>
#include <string>

namespace mduit {

enum class ErrorCode {
  kInvalidArgument = 1,
  kIo,
  kParse,
  kValidation,
  kConfig,
  kNumeric,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, const std::string& what,
                    ErrorCode code = ErrorCode::kValidation) {
  if (!cond) throw Error(code, what);
}

}  // namespace mduit
