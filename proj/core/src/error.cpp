#include "dmlsl/error.hpp"

#include <utility>

namespace dmlsl {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kMissingColumn: return "MissingColumn";
    case ErrorCode::kNonNumericCell: return "NonNumericCell";
    case ErrorCode::kEmptyData: return "EmptyData";
    case ErrorCode::kInvalidDataset: return "InvalidDataset";
    case ErrorCode::kStoreUnavailable: return "StoreUnavailable";
    case ErrorCode::kUnknownKey: return "UnknownKey";
    case ErrorCode::kSchemaMismatch: return "SchemaMismatch";
    case ErrorCode::kUnknownLearner: return "UnknownLearner";
    case ErrorCode::kBadParam: return "BadParam";
    case ErrorCode::kDegenerateInput: return "DegenerateInput";
    case ErrorCode::kSingularSystem: return "SingularSystem";
    case ErrorCode::kWidthMismatch: return "WidthMismatch";
    case ErrorCode::kTooManyFolds: return "TooManyFolds";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kDegenerateScore: return "DegenerateScore";
    case ErrorCode::kTaskTimeout: return "TaskTimeout";
    case ErrorCode::kTaskFailed: return "TaskFailed";
    case ErrorCode::kPayloadTooLarge: return "PayloadTooLarge";
    case ErrorCode::kIncompleteBatch: return "IncompleteBatch";
  }
  return "Unknown";
}

DmlError::DmlError(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

DmlError::DmlError(ErrorCode code, const std::string& message, std::string task_id)
    : std::runtime_error(std::string(to_string(code)) + " [" + task_id + "]: " + message),
      code_(code),
      task_id_(std::move(task_id)) {}

}  // namespace dmlsl
