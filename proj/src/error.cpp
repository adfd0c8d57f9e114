#include "mcsurv/error.hpp"

namespace mcsurv {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::NonNumericValue: return "NonNumericValue";
    case ErrorCode::InvalidEventFlag: return "InvalidEventFlag";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::DegenerateTimes: return "DegenerateTimes";
    case ErrorCode::UnknownTableId: return "UnknownTableId";
    case ErrorCode::InvalidRate: return "InvalidRate";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NoEvents: return "NoEvents";
    case ErrorCode::ZeroReferenceSurvival: return "ZeroReferenceSurvival";
    case ErrorCode::InvalidDims: return "InvalidDims";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptySubgroup: return "EmptySubgroup";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptArtifact: return "CorruptArtifact";
    case ErrorCode::DegenerateDenominator: return "DegenerateDenominator";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::AllTimestepsSkipped: return "AllTimestepsSkipped";
    case ErrorCode::UnknownFeature: return "UnknownFeature";
    case ErrorCode::NoCategoricalFeatures: return "NoCategoricalFeatures";
    case ErrorCode::DuplicateName: return "DuplicateName";
    case ErrorCode::EmptySubgroupOnTrain: return "EmptySubgroupOnTrain";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::NoComparablePairs: return "NoComparablePairs";
    case ErrorCode::MisalignedRuns: return "MisalignedRuns";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace mcsurv
