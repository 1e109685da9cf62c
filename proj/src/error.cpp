#include "dispersion/error.hpp"

namespace dispersion {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::MismatchedNodeSet: return "MismatchedNodeSet";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::UnitMismatch: return "UnitMismatch";
    case ErrorKind::ManifestMismatch: return "ManifestMismatch";
    case ErrorKind::InconsistentInitialConfiguration: return "InconsistentInitialConfiguration";
    case ErrorKind::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorKind::SingleRun: return "SingleRun";
    case ErrorKind::EmptyClass: return "EmptyClass";
    case ErrorKind::UnknownPartId: return "UnknownPartId";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::TooShortForLevels: return "TooShortForLevels";
    case ErrorKind::ZeroTimeIncrement: return "ZeroTimeIncrement";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::InsufficientSamples: return "InsufficientSamples";
    case ErrorKind::BasisMissing: return "BasisMissing";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::SingleClass: return "SingleClass";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::InfeasibleConfig: return "InfeasibleConfig";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::NonBinaryLabel: return "NonBinaryLabel";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

}  // namespace dispersion
