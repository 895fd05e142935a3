#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace smoothmix {

enum class ErrorCode {
    InvalidParameter,
    UnsupportedDimension,
    NonInvertible,
    QuadratureFailure,
    InvalidCount,
    InvalidProb,
    UnsupportedCombination,
    InconsistentInputs,
    ZeroCellProbability,
    DegreeCapExceeded,
    SupUnknown,
    NonFiniteLogRatio,
    UnsupportedVariant,
    XDependentSchedule,
    InvalidMoment,
    InsufficientPoints,
    HypothesisViolated,
    Unsupported,
    ConfigError,
    InvariantViolation,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, ErrorCode code, const std::string& message) {
    if (!condition) fail(code, message);
}

}  // namespace smoothmix
