#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace roomsemble {

enum class ErrorKind {
  MalformedImage,
  InvalidSigma,
  ImageTooSmall,
  DimensionMismatch,
  EmptyTripletSet,
  NoNegativesAvailable,
  UnknownImage,
  BackendUnavailable,
  EmptyTaxonomy,
  EmptyCandidatePool,
  ManifestError,
  UnknownPhoto,
  UnknownListing,
  MalformedSurvey,
  MissingImage,
  FormatError,
  IoError,
  ConfigError,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedImage: return "MalformedImage";
    case ErrorKind::InvalidSigma: return "InvalidSigma";
    case ErrorKind::ImageTooSmall: return "ImageTooSmall";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::EmptyTripletSet: return "EmptyTripletSet";
    case ErrorKind::NoNegativesAvailable: return "NoNegativesAvailable";
    case ErrorKind::UnknownImage: return "UnknownImage";
    case ErrorKind::BackendUnavailable: return "BackendUnavailable";
    case ErrorKind::EmptyTaxonomy: return "EmptyTaxonomy";
    case ErrorKind::EmptyCandidatePool: return "EmptyCandidatePool";
    case ErrorKind::ManifestError: return "ManifestError";
    case ErrorKind::UnknownPhoto: return "UnknownPhoto";
    case ErrorKind::UnknownListing: return "UnknownListing";
    case ErrorKind::MalformedSurvey: return "MalformedSurvey";
    case ErrorKind::MissingImage: return "MissingImage";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable kind so the
/// HTTP layer and the CLI can map it without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace roomsemble
