#include "evsal/error.hpp"

namespace evsal {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::OutOfBounds: return "OutOfBounds";
    case ErrorKind::NonMonotonicTimestamp: return "NonMonotonicTimestamp";
    case ErrorKind::BadPolarity: return "BadPolarity";
    case ErrorKind::InvalidBinning: return "InvalidBinning";
    case ErrorKind::InvalidWindow: return "InvalidWindow";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::TrailingData: return "TrailingData";
    case ErrorKind::InvariantViolation: return "InvariantViolation";
    case ErrorKind::Io: return "Io";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::IntensityOutOfRange: return "IntensityOutOfRange";
    case ErrorKind::TooFewFrames: return "TooFewFrames";
    case ErrorKind::NonIncreasingTimestamps: return "NonIncreasingTimestamps";
    case ErrorKind::GeometryMismatch: return "GeometryMismatch";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::ZeroVariance: return "ZeroVariance";
    case ErrorKind::EmptyFixations: return "EmptyFixations";
    case ErrorKind::NoNegatives: return "NoNegatives";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::BadFormat: return "BadFormat";
    case ErrorKind::BadAxis: return "BadAxis";
    case ErrorKind::KernelTooLarge: return "KernelTooLarge";
    case ErrorKind::BadSize: return "BadSize";
    case ErrorKind::BadSigma: return "BadSigma";
    case ErrorKind::NotScalarLoss: return "NotScalarLoss";
    case ErrorKind::DetachedNode: return "DetachedNode";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::MissingGradient: return "MissingGradient";
    case ErrorKind::WindowMismatch: return "WindowMismatch";
    case ErrorKind::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorKind::RangeViolation: return "RangeViolation";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::DivergedLoss: return "DivergedLoss";
    case ErrorKind::Usage: return "Usage";
    case ErrorKind::UnknownKey: return "UnknownKey";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message,
             std::optional<std::size_t> index)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message),
      kind_(kind),
      detail_(message),
      index_(index) {}

}  // namespace evsal
