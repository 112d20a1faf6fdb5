#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hierlid {

/// Failure categories surfaced by the library. The CLI maps these onto
/// process exit codes (validation 2, numerical 3, I/O 4).
enum class ErrorKind {
  MissingColumn,
  TypeError,
  InvariantViolation,
  OrphanTree,
  EmptyTrack,
  EmptyInput,
  UnknownForm,
  DimensionMismatch,
  ZeroArea,
  ColumnMismatch,
  SingularNormalEquations,
  SingularInformation,
  InsufficientClusters,
  LengthMismatch,
  EmptyRaster,
  TooFewCandidates,
  ConfigError,
  PreconditionFailed,
  IoError,
};

inline std::string_view kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::TypeError: return "TypeError";
    case ErrorKind::InvariantViolation: return "InvariantViolation";
    case ErrorKind::OrphanTree: return "OrphanTree";
    case ErrorKind::EmptyTrack: return "EmptyTrack";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::UnknownForm: return "UnknownForm";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::ZeroArea: return "ZeroArea";
    case ErrorKind::ColumnMismatch: return "ColumnMismatch";
    case ErrorKind::SingularNormalEquations: return "SingularNormalEquations";
    case ErrorKind::SingularInformation: return "SingularInformation";
    case ErrorKind::InsufficientClusters: return "InsufficientClusters";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EmptyRaster: return "EmptyRaster";
    case ErrorKind::TooFewCandidates: return "TooFewCandidates";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::PreconditionFailed: return "PreconditionFailed";
    case ErrorKind::IoError: return "IoError";
  }
  return "Error";
}

/// Is this a numerical failure (exit code 3) as opposed to input validation?
inline bool is_numerical(ErrorKind kind) {
  return kind == ErrorKind::SingularNormalEquations ||
         kind == ErrorKind::SingularInformation;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::string(kind_name(kind)) + ": " + message),
        kind_(kind) {}

  Error(ErrorKind kind, std::size_t row, std::string message)
      : std::runtime_error(std::string(kind_name(kind)) + " at row " +
                           std::to_string(row) + ": " + message),
        kind_(kind),
        row_(row) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<std::size_t> row() const noexcept { return row_; }

  /// Same kind, message prefixed with pipeline-stage context.
  static Error with_context(const Error& e, const std::string& context) {
    return Error(raw_tag{}, e.kind(), context + ": " + e.what());
  }

 private:
  struct raw_tag {};
  Error(raw_tag, ErrorKind kind, std::string full_message)
      : std::runtime_error(std::move(full_message)), kind_(kind) {}

  ErrorKind kind_;
  std::optional<std::size_t> row_;
};

}  // namespace hierlid
