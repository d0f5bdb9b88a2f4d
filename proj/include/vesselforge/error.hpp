#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vf {

enum class Errc {
  FileNotFound,
  UnsupportedFormat,
  CorruptImage,
  IoFailure,
  WrongChannelCount,
  DegenerateTiling,
  InvalidArgument,
  EmptyFov,
  InvalidStride,
  PatchLargerThanImage,
  DimensionMismatch,
  ShapeMismatch,
  SpatialMismatch,
  OddSpatialDims,
  StaleCache,
  NonFinite,
  TooFewPatches,
  DegenerateClasses,
  MissingFiles,
  StaleArtifact,
  ParseError,
  ConfigError,
};

constexpr std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::FileNotFound: return "FileNotFound";
    case Errc::UnsupportedFormat: return "UnsupportedFormat";
    case Errc::CorruptImage: return "CorruptImage";
    case Errc::IoFailure: return "IoFailure";
    case Errc::WrongChannelCount: return "WrongChannelCount";
    case Errc::DegenerateTiling: return "DegenerateTiling";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::EmptyFov: return "EmptyFov";
    case Errc::InvalidStride: return "InvalidStride";
    case Errc::PatchLargerThanImage: return "PatchLargerThanImage";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::SpatialMismatch: return "SpatialMismatch";
    case Errc::OddSpatialDims: return "OddSpatialDims";
    case Errc::StaleCache: return "StaleCache";
    case Errc::NonFinite: return "NonFinite";
    case Errc::TooFewPatches: return "TooFewPatches";
    case Errc::DegenerateClasses: return "DegenerateClasses";
    case Errc::MissingFiles: return "MissingFiles";
    case Errc::StaleArtifact: return "StaleArtifact";
    case Errc::ParseError: return "ParseError";
    case Errc::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure in the library is reported through this exception; `code()`
/// identifies the failure class so callers (and the CLI exit-code mapping)
/// can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace vf
