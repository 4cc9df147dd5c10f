#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace peakload {

/// Error classes map onto CLI exit codes: usage 1, data 2, numerical 3.
enum class ErrorClass { Usage = 1, Data = 2, Numerical = 3 };

enum class Errc {
  // timeseries
  NonMonotonicTimestamps,
  OffGrid,
  EmptyInput,
  BadSchema,
  NoStations,
  ChannelMissing,
  // synthgen
  InvalidConfig,
  MisalignedSeries,
  // features
  SeriesTooShort,
  MissingNeighbor,
  RangeOutsideData,
  DegenerateColumn,
  // spline / gam
  SingularSystem,
  DimensionMismatch,
  UnknownVariant,
  InsufficientData,
  MissingColumn,
  ZeroScale,
  // mlp
  ShapeMismatch,
  NonFiniteActivation,
  NonFiniteGradient,
  TooFewRows,
  DivergedLoss,
  // tuner
  InsufficientHistory,
  TooFewTrials,
  LeakageDetected,
  // pipeline
  NoMembers,
  SlotMismatch,
  EmptyMonth,
  // generic
  Io,
  Usage,
};

std::string_view errc_name(Errc code) noexcept;
ErrorClass errc_class(Errc code) noexcept;

/// Library error. `where` names the module and operation, e.g. "features.dsocd".
class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string where, const std::string& message);

  Errc code() const noexcept { return code_; }
  ErrorClass error_class() const noexcept { return errc_class(code_); }
  const std::string& where() const noexcept { return where_; }

 private:
  Errc code_;
  std::string where_;
};

[[noreturn]] void fail(Errc code, std::string where, const std::string& message);

}  // namespace peakload
