#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dmaloc {

enum class ErrorKind {
  InvalidArgument,
  InvalidConfig,
  PlacementInfeasible,
  InfeasibleAbsorption,
  DegenerateGeometry,
  SilentChannel,
  SignalTooShort,
  DimensionMismatch,
  StaleCache,
  NumericalFailure,
  EmptyDataset,
  Io,
  UnsupportedFormat,
  CorpusUnavailable,
  CheckpointVersion,
  CheckpointTruncated,
  CheckpointChecksum,
  CheckpointInconsistent,
  MissingCheckpoint,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace dmaloc
