#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace drvar {

enum class ErrorCode {
  NonConvergence,
  SingularInformation,
  RankDeficient,
  ArmTooSmall,
  PositivityViolation,
  EmptyArm,
  SingularA,
  NegativeVariance,
  DegenerateDraws,
  TooManyFailures,
  ZeroPooledSD,
  ParseError,
  NonBinaryTreatment,
  MissingColumn,
  MissingValue,
  InvalidArgument,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::SingularInformation: return "SingularInformation";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::ArmTooSmall: return "ArmTooSmall";
    case ErrorCode::PositivityViolation: return "PositivityViolation";
    case ErrorCode::EmptyArm: return "EmptyArm";
    case ErrorCode::SingularA: return "SingularA";
    case ErrorCode::NegativeVariance: return "NegativeVariance";
    case ErrorCode::DegenerateDraws: return "DegenerateDraws";
    case ErrorCode::TooManyFailures: return "TooManyFailures";
    case ErrorCode::ZeroPooledSD: return "ZeroPooledSD";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::NonBinaryTreatment: return "NonBinaryTreatment";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::MissingValue: return "MissingValue";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every recoverable failure in the library is raised as drvar::Error so
/// callers (bootstrap loops, the simulation harness, the CLI) can count and
/// report it by code instead of aborting.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace drvar
