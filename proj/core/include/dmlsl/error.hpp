#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dmlsl {

enum class ErrorCode {
  kInvalidArgument,
  kIo,
  // dataset
  kMissingColumn,
  kNonNumericCell,
  kEmptyData,
  kInvalidDataset,
  kStoreUnavailable,
  kUnknownKey,
  kSchemaMismatch,
  // learners
  kUnknownLearner,
  kBadParam,
  kDegenerateInput,
  kSingularSystem,
  kWidthMismatch,
  // resampling
  kTooManyFolds,
  // dmlcore
  kLengthMismatch,
  kDegenerateScore,
  // tasking / backends
  kTaskTimeout,
  kTaskFailed,
  kPayloadTooLarge,
  kIncompleteBatch,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library. Callers dispatch on code().
class DmlError : public std::runtime_error {
 public:
  DmlError(ErrorCode code, const std::string& message);
  DmlError(ErrorCode code, const std::string& message, std::string task_id);

  ErrorCode code() const noexcept { return code_; }
  // Set for task-level failures raised by execution backends.
  const std::string& task_id() const noexcept { return task_id_; }

 private:
  ErrorCode code_;
  std::string task_id_;
};

}  // namespace dmlsl
