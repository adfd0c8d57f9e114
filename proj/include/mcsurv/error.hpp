#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mcsurv {

enum class ErrorCode {
  MissingColumn,
  NonNumericValue,
  InvalidEventFlag,
  EmptyDataset,
  DegenerateTimes,
  UnknownTableId,
  InvalidRate,
  InvalidArgument,
  EmptyInput,
  NoEvents,
  ZeroReferenceSurvival,
  InvalidDims,
  DimensionMismatch,
  EmptySubgroup,
  VersionMismatch,
  CorruptArtifact,
  DegenerateDenominator,
  LengthMismatch,
  AllTimestepsSkipped,
  UnknownFeature,
  NoCategoricalFeatures,
  DuplicateName,
  EmptySubgroupOnTrain,
  NonFiniteLoss,
  NoComparablePairs,
  MisalignedRuns,
  Io,
};

std::string_view to_string(ErrorCode code);

/// Every failure surfaced by the library carries one of the codes above so
/// that callers (and the CLI) can branch on the kind rather than the text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mcsurv
