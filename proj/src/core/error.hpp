#pragma once

#include <stdexcept>
#include <string>

namespace mcl {

// Error categories surfaced through the C API as distinct codes.
enum class ErrorCode {
  kInvalidArgument,
  kIo,
  kBadMagic,
  kUnsupportedVersion,
  kTruncated,
  kDimensionMismatch,
  kNoClusters,
  kDegenerateEmbedding,
  kNumeric,
  kState,
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

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorCode::kInvalidArgument, what);
}

}  // namespace mcl
