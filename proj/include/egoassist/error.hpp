#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace egoassist {

enum class ErrorCode {
  MissingFile,
  MalformedLine,
  InvariantViolation,
  BehindCamera,
  InvalidSample,
  DimensionMismatch,
  WindowTooShort,
  NoSpeech,
  ProviderFailure,
  Timeout,
  OutOfBounds,
  EmptyResponse,
  MalformedReply,
  MissingImage,
  EmptyStore,
  TooFewFrames,
  UnknownDemonstration,
  UnknownSession,
  EmptyInput,
  InvalidSigma,
  TooFewSamples,
  UsageError,
  BindFailure,
  PayloadTooLarge,
};

std::string_view error_code_name(ErrorCode code) noexcept;

/// Every failure in the library surfaces as this exception; `code()` is the
/// stable taxonomy, `what()` carries "<CodeName>: <detail>".
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail);

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace egoassist
