#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace thermo_mdp {

enum class ErrorCode {
  // ingestion / contract violations
  NonStochasticRow,
  NegativeProbability,
  EmptyStateSet,
  NonFiniteCost,
  DimensionMismatch,
  HorizonMismatch,
  LengthMismatch,
  ProtocolLengthMismatch,
  InvalidAction,
  UnnormalizedRule,
  Unnormalized,
  UnnormalizedJoint,
  SupportViolation,
  NonNegativeRho,
  MissingEnergyModel,
  InvalidScenario,
  // numerical failures
  NonFiniteFunctionalOnSupport,
  DegenerateRow,
  UnattainablePerformance,
  NoConvergence,
  NotIrreducible,
  DetailedBalanceViolated,
  SupportMismatch,
  ZeroLikelihoodEverywhere,
  NotBracketed,
  NonMonotoneResponse,
  // resource caps
  EnumerationCapExceeded,
};

enum class ErrorCategory { validation, numerical, cap };

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonStochasticRow: return "NonStochasticRow";
    case ErrorCode::NegativeProbability: return "NegativeProbability";
    case ErrorCode::EmptyStateSet: return "EmptyStateSet";
    case ErrorCode::NonFiniteCost: return "NonFiniteCost";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::HorizonMismatch: return "HorizonMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ProtocolLengthMismatch: return "ProtocolLengthMismatch";
    case ErrorCode::InvalidAction: return "InvalidAction";
    case ErrorCode::UnnormalizedRule: return "UnnormalizedRule";
    case ErrorCode::Unnormalized: return "Unnormalized";
    case ErrorCode::UnnormalizedJoint: return "UnnormalizedJoint";
    case ErrorCode::SupportViolation: return "SupportViolation";
    case ErrorCode::NonNegativeRho: return "NonNegativeRho";
    case ErrorCode::MissingEnergyModel: return "MissingEnergyModel";
    case ErrorCode::InvalidScenario: return "InvalidScenario";
    case ErrorCode::NonFiniteFunctionalOnSupport: return "NonFiniteFunctionalOnSupport";
    case ErrorCode::DegenerateRow: return "DegenerateRow";
    case ErrorCode::UnattainablePerformance: return "UnattainablePerformance";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::NotIrreducible: return "NotIrreducible";
    case ErrorCode::DetailedBalanceViolated: return "DetailedBalanceViolated";
    case ErrorCode::SupportMismatch: return "SupportMismatch";
    case ErrorCode::ZeroLikelihoodEverywhere: return "ZeroLikelihoodEverywhere";
    case ErrorCode::NotBracketed: return "NotBracketed";
    case ErrorCode::NonMonotoneResponse: return "NonMonotoneResponse";
    case ErrorCode::EnumerationCapExceeded: return "EnumerationCapExceeded";
  }
  return "Unknown";
}

constexpr ErrorCategory category_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFiniteFunctionalOnSupport:
    case ErrorCode::DegenerateRow:
    case ErrorCode::UnattainablePerformance:
    case ErrorCode::NoConvergence:
    case ErrorCode::NotIrreducible:
    case ErrorCode::DetailedBalanceViolated:
    case ErrorCode::SupportMismatch:
    case ErrorCode::ZeroLikelihoodEverywhere:
    case ErrorCode::NotBracketed:
    case ErrorCode::NonMonotoneResponse:
      return ErrorCategory::numerical;
    case ErrorCode::EnumerationCapExceeded:
      return ErrorCategory::cap;
    default:
      return ErrorCategory::validation;
  }
}

/// Every failure raised by the library. The code is stable and machine readable;
/// the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace thermo_mdp
