#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace clab {

enum class ErrorCode {
  ZeroRow,
  NotUnitNorm,
  ShapeMismatch,
  DegenerateBatch,
  InvalidTemperature,
  InvalidAlpha,
  InvalidLambda,
  EmptyNegatives,
  NonAscendingGrid,
  NoPositivePairs,
  KTooLarge,
  InvalidDirection,
  InvalidConfig,
  SamplerStall,
  NonFiniteLoss,
  CorruptHeader,
  TruncatedPayload,
  UnsupportedVersion,
  IoError,
  MissingLabels,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroRow: return "ZeroRow";
    case ErrorCode::NotUnitNorm: return "NotUnitNorm";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DegenerateBatch: return "DegenerateBatch";
    case ErrorCode::InvalidTemperature: return "InvalidTemperature";
    case ErrorCode::InvalidAlpha: return "InvalidAlpha";
    case ErrorCode::InvalidLambda: return "InvalidLambda";
    case ErrorCode::EmptyNegatives: return "EmptyNegatives";
    case ErrorCode::NonAscendingGrid: return "NonAscendingGrid";
    case ErrorCode::NoPositivePairs: return "NoPositivePairs";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::InvalidDirection: return "InvalidDirection";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::SamplerStall: return "SamplerStall";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::CorruptHeader: return "CorruptHeader";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MissingLabels: return "MissingLabels";
  }
  return "Unknown";
}

/// Every failure raised by the library. `index()` carries the row, step or
/// byte offset the error refers to when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::size_t> index = std::nullopt)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        index_(index) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> index_;
};

}  // namespace clab
