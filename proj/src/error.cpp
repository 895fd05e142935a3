#include "smoothmix/error.hpp"

namespace smoothmix {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidParameter: return "InvalidParameter";
        case ErrorCode::UnsupportedDimension: return "UnsupportedDimension";
        case ErrorCode::NonInvertible: return "NonInvertible";
        case ErrorCode::QuadratureFailure: return "QuadratureFailure";
        case ErrorCode::InvalidCount: return "InvalidCount";
        case ErrorCode::InvalidProb: return "InvalidProb";
        case ErrorCode::UnsupportedCombination: return "UnsupportedCombination";
        case ErrorCode::InconsistentInputs: return "InconsistentInputs";
        case ErrorCode::ZeroCellProbability: return "ZeroCellProbability";
        case ErrorCode::DegreeCapExceeded: return "DegreeCapExceeded";
        case ErrorCode::SupUnknown: return "SupUnknown";
        case ErrorCode::NonFiniteLogRatio: return "NonFiniteLogRatio";
        case ErrorCode::UnsupportedVariant: return "UnsupportedVariant";
        case ErrorCode::XDependentSchedule: return "XDependentSchedule";
        case ErrorCode::InvalidMoment: return "InvalidMoment";
        case ErrorCode::InsufficientPoints: return "InsufficientPoints";
        case ErrorCode::HypothesisViolated: return "HypothesisViolated";
        case ErrorCode::Unsupported: return "Unsupported";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::InvariantViolation: return "InvariantViolation";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace smoothmix
