#include "dmaloc/errors.hpp"

namespace dmaloc {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::InvalidConfig: return "invalid-config";
    case ErrorKind::PlacementInfeasible: return "placement-infeasible";
    case ErrorKind::InfeasibleAbsorption: return "infeasible-absorption";
    case ErrorKind::DegenerateGeometry: return "degenerate-geometry";
    case ErrorKind::SilentChannel: return "silent-channel";
    case ErrorKind::SignalTooShort: return "signal-too-short";
    case ErrorKind::DimensionMismatch: return "dimension-mismatch";
    case ErrorKind::StaleCache: return "stale-cache";
    case ErrorKind::NumericalFailure: return "numerical-failure";
    case ErrorKind::EmptyDataset: return "empty-dataset";
    case ErrorKind::Io: return "io";
    case ErrorKind::UnsupportedFormat: return "unsupported-format";
    case ErrorKind::CorpusUnavailable: return "corpus-unavailable";
    case ErrorKind::CheckpointVersion: return "checkpoint-version";
    case ErrorKind::CheckpointTruncated: return "checkpoint-truncated";
    case ErrorKind::CheckpointChecksum: return "checkpoint-checksum";
    case ErrorKind::CheckpointInconsistent: return "checkpoint-inconsistent";
    case ErrorKind::MissingCheckpoint: return "missing-checkpoint";
  }
  return "unknown";
}

}  // namespace dmaloc
