#pragma once

#include <stdexcept>
#include <string>

namespace ptedit {

enum class ErrorKind {
  DegenerateCloud,
  EmptyCloud,
  EmptyRegion,
  LengthMismatch,
  InvalidParams,
  InvalidEdit,
  UnknownCategory,
  UnknownToken,
  InvalidT,
  BadStep,
  ShapeMismatch,
  Diverged,
  TooFewSamples,
  TooFewPoints,
  ZeroDelta,
  CheckpointMismatch,
  BadFormat,
  IoError,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind)
  {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind)
{
  switch (kind) {
    case ErrorKind::DegenerateCloud: return "DegenerateCloud";
    case ErrorKind::EmptyCloud: return "EmptyCloud";
    case ErrorKind::EmptyRegion: return "EmptyRegion";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::InvalidParams: return "InvalidParams";
    case ErrorKind::InvalidEdit: return "InvalidEdit";
    case ErrorKind::UnknownCategory: return "UnknownCategory";
    case ErrorKind::UnknownToken: return "UnknownToken";
    case ErrorKind::InvalidT: return "InvalidT";
    case ErrorKind::BadStep: return "BadStep";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::Diverged: return "Diverged";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::TooFewPoints: return "TooFewPoints";
    case ErrorKind::ZeroDelta: return "ZeroDelta";
    case ErrorKind::CheckpointMismatch: return "CheckpointMismatch";
    case ErrorKind::BadFormat: return "BadFormat";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

} // namespace ptedit
