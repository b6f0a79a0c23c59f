#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace slowfast {

enum class ErrorKind {
    NonConvergence,
    SingularJacobian,
    Stagnation,
    SingularA0,
    MissingNeighbor,
    SingularCorrection,
    NonHyperbolic,
    InvalidTolerance,
    NewtonDivergence,
    NoBracket,
    SectionMiss,
    DegenerateFit,
    UnknownModel,
    BadParams,
    InvalidArgument,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::NonConvergence: return "NonConvergence";
        case ErrorKind::SingularJacobian: return "SingularJacobian";
        case ErrorKind::Stagnation: return "Stagnation";
        case ErrorKind::SingularA0: return "SingularA0";
        case ErrorKind::MissingNeighbor: return "MissingNeighbor";
        case ErrorKind::SingularCorrection: return "SingularCorrection";
        case ErrorKind::NonHyperbolic: return "NonHyperbolic";
        case ErrorKind::InvalidTolerance: return "InvalidTolerance";
        case ErrorKind::NewtonDivergence: return "NewtonDivergence";
        case ErrorKind::NoBracket: return "NoBracket";
        case ErrorKind::SectionMiss: return "SectionMiss";
        case ErrorKind::DegenerateFit: return "DegenerateFit";
        case ErrorKind::UnknownModel: return "UnknownModel";
        case ErrorKind::BadParams: return "BadParams";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

/// Every numerical failure in the library is reported through this type; the
/// kind is what callers branch on, the message carries the diagnostics.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace slowfast
