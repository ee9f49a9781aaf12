#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dmlsl/dataset.hpp"
#include "dmlsl/learners.hpp"
#include "dmlsl/resampling.hpp"

namespace dmlsl {

// PLR has two nuisance functions: g regresses the outcome, m the treatment.
enum class Nuisance { kG = 0, kM = 1 };

std::string_view to_string(Nuisance nuisance);
Nuisance parse_nuisance(std::string_view text);

// per_rep: one task per (repetition, nuisance) holding K fits.
// per_fold: one task per (repetition, fold, nuisance) holding a single fit.
enum class ScalingMode { kPerRep, kPerFold };

std::string_view to_string(ScalingMode mode);
ScalingMode parse_scaling_mode(std::string_view text);

struct NuisanceTarget {
  Nuisance name = Nuisance::kG;
  std::string target_col;
  std::vector<std::string> feature_cols;
};

NuisanceTarget outcome_target(const ColumnRoles& roles);
NuisanceTarget treatment_target(const ColumnRoles& roles);

struct NuisanceJob {
  NuisanceTarget target;
  LearnerSpec learner;
};

struct TaskSplit {
  std::size_t fold = 0;
  IndexSet train;
  IndexSet test;

  bool operator==(const TaskSplit&) const = default;
};

struct TaskPayload {
  std::string task_id;
  DatasetRef dataset_ref;
  std::string target_col;
  std::vector<std::string> feature_cols;
  std::string learner_spec;  // canonical text form
  std::vector<TaskSplit> splits;
  std::uint64_t seed = 0;  // batch master seed; each split derives its own fit seed
  std::size_t rep_index = 0;
  Nuisance nuisance = Nuisance::kG;

  bool operator==(const TaskPayload&) const = default;
};

struct Prediction {
  std::size_t index = 0;
  double value = 0.0;

  bool operator==(const Prediction&) const = default;
};

struct TaskResult {
  std::string task_id;
  std::vector<Prediction> predictions;
  std::int64_t duration_ms = 0;
  std::map<std::string, std::string> worker_meta;

  bool operator==(const TaskResult&) const = default;
};

// Seed of the single fit for (repetition, fold, nuisance). Both scaling modes
// use it, so they run identical fits.
std::uint64_t split_seed(std::uint64_t master_seed, std::size_t rep, std::size_t fold, Nuisance nuisance);

// Wire encoding is JSON with the field names of TaskPayload / TaskResult.
// Splits encode as {"fold", "train", "test"}, predictions as [index, value].
inline constexpr std::size_t kMaxWireBytes = 6'000'000;

std::string encode_payload(const TaskPayload& payload);
TaskPayload decode_payload(std::string_view text);
std::string encode_result(const TaskResult& result);
TaskResult decode_result(std::string_view text);

// Throws InvalidArgument when a split is empty, overlaps train/test, or the
// task has no splits.
void validate_payload(const TaskPayload& payload);

// Task order: for each repetition, for each job (g first), for each fold.
std::vector<TaskPayload> build_batch(const DatasetRef& ref, const FoldPlan& plan, std::span<const NuisanceJob> jobs,
                                     ScalingMode scaling, std::uint64_t master_seed);

// The worker function. Fits the learner on each split's train rows and predicts
// its test rows. duration_ms covers fit+predict only.
TaskResult execute_task(const TaskPayload& payload, const ObjectStore& store);
TaskResult execute_task(const TaskPayload& payload, const DmlDataset& ds);

struct TimedResult {
  TaskResult result;
  double elapsed_ms = 0.0;  // unrounded fit+predict wall time
};
TimedResult execute_task_timed(const TaskPayload& payload, const DmlDataset& ds);

using DatasetSnapshot = std::map<std::string, std::shared_ptr<const DmlDataset>, std::less<>>;
// Fetches every distinct dataset referenced by the batch once.
DatasetSnapshot resolve_datasets(std::span<const TaskPayload> payloads, const ObjectStore& store);

struct BackendCapabilities {
  std::size_t max_concurrency = 0;  // 0 = unbounded
  std::int64_t time_limit_ms = 0;   // 0 = none
};

// Execution backend contract. run_batch validates the batch, delegates to
// execute_batch and checks that every payload got exactly one result covering
// its test indices. Failures are fail-fast and name the offending task.
class ExecutionBackend {
 public:
  virtual ~ExecutionBackend() = default;

  virtual std::string name() const = 0;
  virtual BackendCapabilities capabilities() const = 0;

  // Throws TaskTimeout, TaskFailed, PayloadTooLarge, IncompleteBatch.
  std::vector<TaskResult> run_batch(std::span<const TaskPayload> payloads);

 protected:
  virtual std::vector<TaskResult> execute_batch(std::span<const TaskPayload> payloads) = 0;
};

class SerialBackend final : public ExecutionBackend {
 public:
  explicit SerialBackend(const ObjectStore& store, std::int64_t time_limit_ms = 0);

  std::string name() const override { return "serial"; }
  BackendCapabilities capabilities() const override { return {1, time_limit_ms_}; }

 protected:
  std::vector<TaskResult> execute_batch(std::span<const TaskPayload> payloads) override;

 private:
  const ObjectStore& store_;
  std::int64_t time_limit_ms_;
};

// Local worker pool. Results are written into slots keyed by payload position,
// so completion order never leaks into the output.
class PoolBackend final : public ExecutionBackend {
 public:
  PoolBackend(const ObjectStore& store, std::size_t workers, std::int64_t time_limit_ms = 0);

  std::string name() const override { return "pool"; }
  BackendCapabilities capabilities() const override { return {workers_, time_limit_ms_}; }

 protected:
  std::vector<TaskResult> execute_batch(std::span<const TaskPayload> payloads) override;

 private:
  const ObjectStore& store_;
  std::size_t workers_;
  std::int64_t time_limit_ms_;
};

}  // namespace dmlsl
