#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sseg {

/// Machine-readable failure category carried by every exception the toolbox throws.
enum class ErrorCode {
  DuplicateName,
  EmptyName,
  UnknownType,
  InvalidParams,
  ParseError,
  BadOverride,
  TypeClash,
  IOError,
  CorruptSample,
  IndexOutOfRange,
  BadPipeline,
  EmptyBatch,
  InvalidSpec,
  ShapeError,
  ConfigError,
  LabelOutOfRange,
  IterOutOfRange,
  NonFiniteLoss,
  ScaleUnderflow,
  DesyncDetected,
  VersionMismatch,
  ShapeMismatch,
  CorruptFile,
  EmptyMatrix,
  BadWindow,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DuplicateName: return "DuplicateName";
    case ErrorCode::EmptyName: return "EmptyName";
    case ErrorCode::UnknownType: return "UnknownType";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::BadOverride: return "BadOverride";
    case ErrorCode::TypeClash: return "TypeClash";
    case ErrorCode::IOError: return "IOError";
    case ErrorCode::CorruptSample: return "CorruptSample";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::BadPipeline: return "BadPipeline";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::IterOutOfRange: return "IterOutOfRange";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::ScaleUnderflow: return "ScaleUnderflow";
    case ErrorCode::DesyncDetected: return "DesyncDetected";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::BadWindow: return "BadWindow";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void check(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) {
    fail(code, message);
  }
}

}  // namespace sseg
