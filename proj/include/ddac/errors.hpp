#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ddac {

enum class ErrorKind {
  InvalidArgument,
  MissingFile,
  MissingColumn,
  NonNumericCell,
  ConstantColumn,
  TooFewRows,
  OutOfRange,
  DegenerateColumn,
  ConstantBasisColumn,
  NonFiniteEigenvalue,
  ShapeMismatch,
  ZeroBlock,
  RankDeficientBlock,
  NotConverged,
  SingularR,
  SigmaZero,
  NearSingularInner,
  OverSelected,
  TruncatedFrame,
  UnknownKind,
  LengthMismatch,
  ConnectionLost,
  Timeout,
  WorkerFailure,
  BindFailure,
  ProtocolError,
  NoGroundTruth,
  UnknownFeature,
  InvalidScenario,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so callers (the CLI in
/// particular) can map it onto stable exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail);

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& detail);

}  // namespace ddac
