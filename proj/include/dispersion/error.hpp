#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dispersion {

enum class ErrorKind {
  IoFailure,
  VersionMismatch,
  EmptyDataset,
  MismatchedNodeSet,
  NonFiniteValue,
  UnitMismatch,
  ManifestMismatch,
  InconsistentInitialConfiguration,
  DegenerateGeometry,
  SingleRun,
  EmptyClass,
  UnknownPartId,
  OutOfRange,
  TooShortForLevels,
  ZeroTimeIncrement,
  DimensionMismatch,
  InsufficientSamples,
  BasisMissing,
  NonFiniteLoss,
  SingleClass,
  TooFewSamples,
  InfeasibleConfig,
  LengthMismatch,
  NonBinaryLabel,
  InvalidConfig,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Library-wide exception. Every failure carries a machine-readable kind so
/// callers (and the CLI's error records) can dispatch without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace dispersion
