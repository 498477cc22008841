#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace focal {

enum class ErrorCode {
  OutOfChart,
  NotUnit,
  NotInOverlap,
  BlowUp,
  LeftAtlas,
  Inconclusive,
  NonMonotoneSamples,
  NonHomeomorphism,
  OrientationReversing,
  TooManyFixedPoints,
  NonConvergent,
  ParseError,
  ConfigError,
  IOFailure,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::OutOfChart: return "OutOfChart";
    case ErrorCode::NotUnit: return "NotUnit";
    case ErrorCode::NotInOverlap: return "NotInOverlap";
    case ErrorCode::BlowUp: return "BlowUp";
    case ErrorCode::LeftAtlas: return "LeftAtlas";
    case ErrorCode::Inconclusive: return "Inconclusive";
    case ErrorCode::NonMonotoneSamples: return "NonMonotoneSamples";
    case ErrorCode::NonHomeomorphism: return "NonHomeomorphism";
    case ErrorCode::OrientationReversing: return "OrientationReversing";
    case ErrorCode::TooManyFixedPoints: return "TooManyFixedPoints";
    case ErrorCode::NonConvergent: return "NonConvergent";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IOFailure: return "IOFailure";
  }
  return "Unknown";
}

/// Single exception type for the library; callers dispatch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace focal
