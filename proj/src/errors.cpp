#include "ddac/errors.hpp"

namespace ddac {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::NonNumericCell: return "NonNumericCell";
    case ErrorKind::ConstantColumn: return "ConstantColumn";
    case ErrorKind::TooFewRows: return "TooFewRows";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::DegenerateColumn: return "DegenerateColumn";
    case ErrorKind::ConstantBasisColumn: return "ConstantBasisColumn";
    case ErrorKind::NonFiniteEigenvalue: return "NonFiniteEigenvalue";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::ZeroBlock: return "ZeroBlock";
    case ErrorKind::RankDeficientBlock: return "RankDeficientBlock";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::SingularR: return "SingularR";
    case ErrorKind::SigmaZero: return "SigmaZero";
    case ErrorKind::NearSingularInner: return "NearSingularInner";
    case ErrorKind::OverSelected: return "OverSelected";
    case ErrorKind::TruncatedFrame: return "TruncatedFrame";
    case ErrorKind::UnknownKind: return "UnknownKind";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::ConnectionLost: return "ConnectionLost";
    case ErrorKind::Timeout: return "Timeout";
    case ErrorKind::WorkerFailure: return "WorkerFailure";
    case ErrorKind::BindFailure: return "BindFailure";
    case ErrorKind::ProtocolError: return "ProtocolError";
    case ErrorKind::NoGroundTruth: return "NoGroundTruth";
    case ErrorKind::UnknownFeature: return "UnknownFeature";
    case ErrorKind::InvalidScenario: return "InvalidScenario";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& detail)
    : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind), detail_(detail) {}

void fail(ErrorKind kind, const std::string& detail) { throw Error(kind, detail); }

}  // namespace ddac
