#include "peakload/errors.hpp"

namespace peakload {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::NonMonotonicTimestamps: return "NonMonotonicTimestamps";
    case Errc::OffGrid: return "OffGrid";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::BadSchema: return "BadSchema";
    case Errc::NoStations: return "NoStations";
    case Errc::ChannelMissing: return "ChannelMissing";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::MisalignedSeries: return "MisalignedSeries";
    case Errc::SeriesTooShort: return "SeriesTooShort";
    case Errc::MissingNeighbor: return "MissingNeighbor";
    case Errc::RangeOutsideData: return "RangeOutsideData";
    case Errc::DegenerateColumn: return "DegenerateColumn";
    case Errc::SingularSystem: return "SingularSystem";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::UnknownVariant: return "UnknownVariant";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::MissingColumn: return "MissingColumn";
    case Errc::ZeroScale: return "ZeroScale";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::NonFiniteActivation: return "NonFiniteActivation";
    case Errc::NonFiniteGradient: return "NonFiniteGradient";
    case Errc::TooFewRows: return "TooFewRows";
    case Errc::DivergedLoss: return "DivergedLoss";
    case Errc::InsufficientHistory: return "InsufficientHistory";
    case Errc::TooFewTrials: return "TooFewTrials";
    case Errc::LeakageDetected: return "LeakageDetected";
    case Errc::NoMembers: return "NoMembers";
    case Errc::SlotMismatch: return "SlotMismatch";
    case Errc::EmptyMonth: return "EmptyMonth";
    case Errc::Io: return "Io";
    case Errc::Usage: return "Usage";
  }
  return "Unknown";
}

ErrorClass errc_class(Errc code) noexcept {
  switch (code) {
    case Errc::Usage:
    case Errc::UnknownVariant:
    case Errc::InvalidConfig:
      return ErrorClass::Usage;
    case Errc::SingularSystem:
    case Errc::ZeroScale:
    case Errc::NonFiniteActivation:
    case Errc::NonFiniteGradient:
    case Errc::DivergedLoss:
      return ErrorClass::Numerical;
    default:
      return ErrorClass::Data;
  }
}

Error::Error(Errc code, std::string where, const std::string& message)
    : std::runtime_error(where + ": " + std::string(errc_name(code)) + ": " + message),
      code_(code),
      where_(std::move(where)) {}

void fail(Errc code, std::string where, const std::string& message) {
  throw Error(code, std::move(where), message);
}

}  // namespace peakload
