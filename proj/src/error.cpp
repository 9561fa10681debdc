#include "geometer/error.hpp"

namespace geometer {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingFile: return "missing_file";
    case ErrorCode::kBadHeader: return "bad_header";
    case ErrorCode::kLengthMismatch: return "length_mismatch";
    case ErrorCode::kDuplicateEdge: return "duplicate_edge";
    case ErrorCode::kDuplicateLabel: return "duplicate_label";
    case ErrorCode::kNodeOutOfRange: return "node_out_of_range";
    case ErrorCode::kUnknownNode: return "unknown_node";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kNonFinite: return "non_finite";
    case ErrorCode::kClassTooSmall: return "class_too_small";
    case ErrorCode::kOverlappingClasses: return "overlapping_classes";
    case ErrorCode::kPoolTooSmall: return "pool_too_small";
    case ErrorCode::kMissingPrototype: return "missing_prototype";
    case ErrorCode::kMissingTeacher: return "missing_teacher";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kUnknownSession: return "unknown_session";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kParse: return "parse";
  }
  return "unknown";
}

}  // namespace geometer
