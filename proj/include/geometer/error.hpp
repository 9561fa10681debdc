#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace geometer {

enum class ErrorCode {
  kMissingFile,
  kBadHeader,
  kLengthMismatch,
  kDuplicateEdge,
  kDuplicateLabel,
  kNodeOutOfRange,
  kUnknownNode,
  kInvalidArgument,
  kShapeMismatch,
  kNonFinite,
  kClassTooSmall,
  kOverlappingClasses,
  kPoolTooSmall,
  kMissingPrototype,
  kMissingTeacher,
  kDivergence,
  kUnknownSession,
  kConfig,
  kIo,
  kParse,
};

std::string_view error_code_name(ErrorCode code);

/// Every failure raised by the library carries a stable, machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace geometer
