#pragma once

#include <stdexcept>
#include <string>

namespace cqs {

enum class ErrorKind {
  ParameterDomain,    // e.g. tau outside (0,1)
  NumericDomain,      // non-finite input
  DegenerateDesign,   // constant projection column
  BandwidthTooSmall,  // kernel weights vanish at a query point
  RankDeficiency,     // singular covariance or design matrix
  Usage,              // scale-tag mismatch and similar API misuse
  Slicing,            // more slices than distinct responses
  DegenerateIterate,  // iterated direction collapsed to zero
  UndefinedRatio,     // all-zero eigenvalues in the dimension criterion
  Configuration,      // bad CLI/config input
  Parse,              // malformed CSV cell
  Schema,             // missing column, wrong layout
  ReplicationFailure  // too many Monte Carlo failures
};

/// Every failure raised by the library carries a kind so callers (the CLI in
/// particular) can map it to an exit code without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::ParameterDomain: return "parameter-domain";
    case ErrorKind::NumericDomain: return "numeric-domain";
    case ErrorKind::DegenerateDesign: return "degenerate-design";
    case ErrorKind::BandwidthTooSmall: return "bandwidth-too-small";
    case ErrorKind::RankDeficiency: return "rank-deficiency";
    case ErrorKind::Usage: return "usage";
    case ErrorKind::Slicing: return "slicing";
    case ErrorKind::DegenerateIterate: return "degenerate-iterate";
    case ErrorKind::UndefinedRatio: return "undefined-ratio";
    case ErrorKind::Configuration: return "configuration";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::ReplicationFailure: return "replication-failure";
  }
  return "unknown";
}

}  // namespace cqs
