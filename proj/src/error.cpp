#include "mcd/error.hpp"

namespace mcd {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnsupportedDtype: return "UnsupportedDtype";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidValue: return "InvalidValue";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::DegenerateVector: return "DegenerateVector";
    case ErrorCode::AllOutliers: return "AllOutliers";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::DegenerateCluster: return "DegenerateCluster";
    case ErrorCode::SubspaceOverlap: return "SubspaceOverlap";
    case ErrorCode::Overcomplete: return "Overcomplete";
    case ErrorCode::IllConditionedBasis: return "IllConditionedBasis";
    case ErrorCode::ZeroSample: return "ZeroSample";
    case ErrorCode::ZeroWeight: return "ZeroWeight";
    case ErrorCode::Unsupported: return "Unsupported";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Error";
}

}  // namespace mcd
