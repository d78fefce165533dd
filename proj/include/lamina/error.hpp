#pragma once

#include <stdexcept>
#include <string>

namespace lamina {

enum class Errc {
  EmptyMask,
  DisconnectedMask,
  NonpositiveSpacing,
  NonpositiveConformalFactor,
  ShapeMismatch,
  IdenticalEndpoints,
  OutsideDomain,
  InvalidBoundaryData,
  ThresholdOutOfRange,
  DegenerateContour,
  TooShort,
  NoLeavesNearby,
  BoxDegenerate,
  DisjointnessViolated,
  WindowTooSmall,
  NonMonotoneProfile,
  BoxMismatch,
  InconsistentMeasures,
  NotClosed,
  NotSimplyConnected,
  TooFewSamples,
  TooFewItems,
  OverlapMismatch,
  LeafNotGeodesic,
  NonAtomicMeasure,
  WrongMetric,
  ConfigInvalid,
  IoFailure,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::EmptyMask: return "EmptyMask";
    case Errc::DisconnectedMask: return "DisconnectedMask";
    case Errc::NonpositiveSpacing: return "NonpositiveSpacing";
    case Errc::NonpositiveConformalFactor: return "NonpositiveConformalFactor";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::IdenticalEndpoints: return "IdenticalEndpoints";
    case Errc::OutsideDomain: return "OutsideDomain";
    case Errc::InvalidBoundaryData: return "InvalidBoundaryData";
    case Errc::ThresholdOutOfRange: return "ThresholdOutOfRange";
    case Errc::DegenerateContour: return "DegenerateContour";
    case Errc::TooShort: return "TooShort";
    case Errc::NoLeavesNearby: return "NoLeavesNearby";
    case Errc::BoxDegenerate: return "BoxDegenerate";
    case Errc::DisjointnessViolated: return "DisjointnessViolated";
    case Errc::WindowTooSmall: return "WindowTooSmall";
    case Errc::NonMonotoneProfile: return "NonMonotoneProfile";
    case Errc::BoxMismatch: return "BoxMismatch";
    case Errc::InconsistentMeasures: return "InconsistentMeasures";
    case Errc::NotClosed: return "NotClosed";
    case Errc::NotSimplyConnected: return "NotSimplyConnected";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::TooFewItems: return "TooFewItems";
    case Errc::OverlapMismatch: return "OverlapMismatch";
    case Errc::LeafNotGeodesic: return "LeafNotGeodesic";
    case Errc::NonAtomicMeasure: return "NonAtomicMeasure";
    case Errc::WrongMetric: return "WrongMetric";
    case Errc::ConfigInvalid: return "ConfigInvalid";
    case Errc::IoFailure: return "IoFailure";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

}  // namespace lamina
