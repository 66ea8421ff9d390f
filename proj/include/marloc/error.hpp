#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace marloc {

enum class ErrorCode {
  NonFiniteResidual,
  NoConvergence,
  Underdetermined,
  DegenerateDesign,
  EmptyObservedSet,
  EmptyDistribution,
  DegenerateConstant,
  SingularA0,
  ZeroDensity,
  MeanHasNoUABP,
  ParseError,
  MissingCovariate,
  IndicatorConflict,
  InvalidArgument,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NonFiniteResidual: return "NonFiniteResidual";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::Underdetermined: return "Underdetermined";
    case ErrorCode::DegenerateDesign: return "DegenerateDesign";
    case ErrorCode::EmptyObservedSet: return "EmptyObservedSet";
    case ErrorCode::EmptyDistribution: return "EmptyDistribution";
    case ErrorCode::DegenerateConstant: return "DegenerateConstant";
    case ErrorCode::SingularA0: return "SingularA0";
    case ErrorCode::ZeroDensity: return "ZeroDensity";
    case ErrorCode::MeanHasNoUABP: return "MeanHasNoUABP";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::MissingCovariate: return "MissingCovariate";
    case ErrorCode::IndicatorConflict: return "IndicatorConflict";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Process exit status used by the CLI for each error kind.
constexpr int exit_code(ErrorCode code) noexcept {
  return 10 + static_cast<int>(code);
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace marloc
