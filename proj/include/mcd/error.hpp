#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mcd {

enum class ErrorCode {
  ParseError,
  UnsupportedDtype,
  DimensionMismatch,
  InvalidValue,
  TooFewSamples,
  DegenerateVector,
  AllOutliers,
  RankDeficient,
  DegenerateCluster,
  SubspaceOverlap,
  Overcomplete,
  IllConditionedBasis,
  ZeroSample,
  ZeroWeight,
  Unsupported,
  ConfigError,
  IoError,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Malformed archive content; carries the byte offset where parsing failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::uint64_t offset)
      : Error(ErrorCode::ParseError, what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

// Two concept subspaces share a direction (smallest principal angle below threshold).
class SubspaceOverlap : public Error {
 public:
  SubspaceOverlap(int first, int second, double angle)
      : Error(ErrorCode::SubspaceOverlap,
              "concepts " + std::to_string(first) + " and " + std::to_string(second) +
                  " overlap (smallest principal angle " + std::to_string(angle) + " rad)"),
        first_(first), second_(second), angle_(angle) {}

  int first() const noexcept { return first_; }
  int second() const noexcept { return second_; }
  double angle() const noexcept { return angle_; }

 private:
  int first_;
  int second_;
  double angle_;
};

}  // namespace mcd
