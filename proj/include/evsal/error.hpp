#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace evsal {

enum class ErrorKind {
  // event_core
  OutOfBounds,
  NonMonotonicTimestamp,
  BadPolarity,
  InvalidBinning,
  InvalidWindow,
  BadMagic,
  TruncatedFile,
  TrailingData,
  InvariantViolation,
  Io,
  // esim
  NonFiniteInput,
  IntensityOutOfRange,
  TooFewFrames,
  NonIncreasingTimestamps,
  GeometryMismatch,
  InvalidConfig,
  // metrics
  ZeroVariance,
  EmptyFixations,
  NoNegatives,
  ShapeMismatch,
  BadFormat,
  // tensor engine
  BadAxis,
  KernelTooLarge,
  BadSize,
  BadSigma,
  NotScalarLoss,
  DetachedNode,
  NonFiniteValue,
  MissingGradient,
  // model
  WindowMismatch,
  NonFiniteActivation,
  // training
  RangeViolation,
  EmptyDataset,
  DivergedLoss,
  // cli / config
  Usage,
  UnknownKey,
};

std::string_view to_string(ErrorKind kind);

/// Exception carrying a machine-readable kind and, for per-element
/// failures, the offending index.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message,
        std::optional<std::size_t> index = std::nullopt);

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<std::size_t> index() const noexcept { return index_; }
  /// The message without the kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
  std::optional<std::size_t> index_;
};

}  // namespace evsal
