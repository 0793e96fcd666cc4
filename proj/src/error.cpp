#include "egoassist/error.hpp"

namespace egoassist {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::InvalidSample: return "InvalidSample";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::WindowTooShort: return "WindowTooShort";
    case ErrorCode::NoSpeech: return "NoSpeech";
    case ErrorCode::ProviderFailure: return "ProviderFailure";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::EmptyResponse: return "EmptyResponse";
    case ErrorCode::MalformedReply: return "MalformedReply";
    case ErrorCode::MissingImage: return "MissingImage";
    case ErrorCode::EmptyStore: return "EmptyStore";
    case ErrorCode::TooFewFrames: return "TooFewFrames";
    case ErrorCode::UnknownDemonstration: return "UnknownDemonstration";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidSigma: return "InvalidSigma";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::UsageError: return "UsageError";
    case ErrorCode::BindFailure: return "BindFailure";
    case ErrorCode::PayloadTooLarge: return "PayloadTooLarge";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + detail),
      code_(code),
      detail_(detail) {}

}  // namespace egoassist
