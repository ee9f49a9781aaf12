#include "dmlsl/tasking.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <thread>
#include <unordered_map>

#include "dmlsl/error.hpp"
#include "dmlsl/rng.hpp"

namespace dmlsl {

using nlohmann::json;

std::string_view to_string(Nuisance nuisance) { return nuisance == Nuisance::kG ? "g" : "m"; }

Nuisance parse_nuisance(std::string_view text) {
  if (text == "g") return Nuisance::kG;
  if (text == "m") return Nuisance::kM;
  throw DmlError(ErrorCode::kInvalidArgument, fmt::format("unknown nuisance '{}'", text));
}

std::string_view to_string(ScalingMode mode) { return mode == ScalingMode::kPerRep ? "per_rep" : "per_fold"; }

ScalingMode parse_scaling_mode(std::string_view text) {
  if (text == "per_rep" || text == "n_rep") return ScalingMode::kPerRep;
  if (text == "per_fold" || text == "n_folds * n_rep") return ScalingMode::kPerFold;
  throw DmlError(ErrorCode::kInvalidArgument, fmt::format("unknown scaling mode '{}'", text));
}

NuisanceTarget outcome_target(const ColumnRoles& roles) { return {Nuisance::kG, roles.y_col, roles.x_cols}; }

NuisanceTarget treatment_target(const ColumnRoles& roles) { return {Nuisance::kM, roles.d_col, roles.x_cols}; }

std::uint64_t split_seed(std::uint64_t master_seed, std::size_t rep, std::size_t fold, Nuisance nuisance) {
  return derive_seed(master_seed, {static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(fold),
                                   static_cast<std::uint64_t>(nuisance)});
}

std::string encode_payload(const TaskPayload& p) {
  json splits = json::array();
  for (const auto& s : p.splits) splits.push_back({{"fold", s.fold}, {"train", s.train}, {"test", s.test}});
  const json doc = {
      {"task_id", p.task_id},
      {"dataset_ref", {{"store_key", p.dataset_ref.store_key}, {"schema_digest", p.dataset_ref.schema_digest}}},
      {"target_col", p.target_col},
      {"feature_cols", p.feature_cols},
      {"learner_spec", p.learner_spec},
      {"splits", std::move(splits)},
      {"seed", p.seed},
      {"rep_index", p.rep_index},
      {"nuisance", to_string(p.nuisance)},
  };
  return doc.dump();
}

TaskPayload decode_payload(std::string_view text) {
  try {
    const json doc = json::parse(text);
    TaskPayload p;
    p.task_id = doc.at("task_id").get<std::string>();
    p.dataset_ref.store_key = doc.at("dataset_ref").at("store_key").get<std::string>();
    p.dataset_ref.schema_digest = doc.at("dataset_ref").at("schema_digest").get<std::string>();
    p.target_col = doc.at("target_col").get<std::string>();
    p.feature_cols = doc.at("feature_cols").get<std::vector<std::string>>();
    p.learner_spec = doc.at("learner_spec").get<std::string>();
    for (const auto& s : doc.at("splits")) {
      p.splits.push_back(
          {s.at("fold").get<std::size_t>(), s.at("train").get<IndexSet>(), s.at("test").get<IndexSet>()});
    }
    p.seed = doc.at("seed").get<std::uint64_t>();
    p.rep_index = doc.at("rep_index").get<std::size_t>();
    p.nuisance = parse_nuisance(doc.at("nuisance").get<std::string>());
    return p;
  } catch (const json::exception& e) {
    throw DmlError(ErrorCode::kInvalidArgument, fmt::format("malformed task payload: {}", e.what()));
  }
}

std::string encode_result(const TaskResult& r) {
  json preds = json::array();
  for (const auto& p : r.predictions) preds.push_back(json::array({p.index, p.value}));
  const json doc = {{"task_id", r.task_id},
                    {"predictions", std::move(preds)},
                    {"duration_ms", r.duration_ms},
                    {"worker_meta", r.worker_meta}};
  return doc.dump();
}

TaskResult decode_result(std::string_view text) {
  try {
    const json doc = json::parse(text);
    TaskResult r;
    r.task_id = doc.at("task_id").get<std::string>();
    for (const auto& p : doc.at("predictions")) r.predictions.push_back({p.at(0).get<std::size_t>(), p.at(1).get<double>()});
    r.duration_ms = doc.at("duration_ms").get<std::int64_t>();
    r.worker_meta = doc.at("worker_meta").get<std::map<std::string, std::string>>();
    return r;
  } catch (const json::exception& e) {
    throw DmlError(ErrorCode::kInvalidArgument, fmt::format("malformed task result: {}", e.what()));
  }
}

void validate_payload(const TaskPayload& payload) {
  const auto fail = [&](const std::string& msg) {
    throw DmlError(ErrorCode::kInvalidArgument, fmt::format("task '{}': {}", payload.task_id, msg));
  };
  if (payload.splits.empty()) fail("no splits");
  if (payload.feature_cols.empty()) fail("no feature columns");
  for (const auto& s : payload.splits) {
    if (s.test.empty()) fail(fmt::format("fold {} has an empty test set", s.fold));
    if (s.train.empty()) fail(fmt::format("fold {} has an empty train set", s.fold));
    std::set<std::size_t> train(s.train.begin(), s.train.end());
    for (std::size_t i : s.test) {
      if (train.contains(i)) fail(fmt::format("fold {}: index {} is in both train and test", s.fold, i));
    }
  }
}

std::vector<TaskPayload> build_batch(const DatasetRef& ref, const FoldPlan& plan, std::span<const NuisanceJob> jobs,
                                     ScalingMode scaling, std::uint64_t master_seed) {
  std::vector<TaskPayload> batch;
  const std::size_t per_task = scaling == ScalingMode::kPerRep ? plan.n_folds() : 1;
  batch.reserve(plan.n_rep() * jobs.size() * plan.n_folds() / per_task);

  for (std::size_t m = 0; m < plan.n_rep(); ++m) {
    std::vector<TaskSplit> splits;
    splits.reserve(plan.n_folds());
    for (std::size_t k = 0; k < plan.n_folds(); ++k) splits.push_back({k, plan.complement(m, k), plan.fold(m, k)});

    for (const auto& job : jobs) {
      TaskPayload proto;
      proto.dataset_ref = ref;
      proto.target_col = job.target.target_col;
      proto.feature_cols = job.target.feature_cols;
      proto.learner_spec = render(job.learner);
      proto.seed = master_seed;
      proto.rep_index = m;
      proto.nuisance = job.target.name;

      if (scaling == ScalingMode::kPerRep) {
        proto.task_id = fmt::format("m{}-{}", m, to_string(job.target.name));
        proto.splits = splits;
        batch.push_back(std::move(proto));
      } else {
        for (const auto& split : splits) {
          TaskPayload task = proto;
          task.task_id = fmt::format("m{}-k{}-{}", m, split.fold, to_string(job.target.name));
          task.splits = {split};
          batch.push_back(std::move(task));
        }
      }
    }
  }
  return batch;
}

TimedResult execute_task_timed(const TaskPayload& payload, const DmlDataset& ds) {
  validate_payload(payload);
  const LearnerSpec spec = parse_learner_spec(payload.learner_spec);
  const auto target = ds.column(payload.target_col);
  std::vector<std::span<const double>> features;
  features.reserve(payload.feature_cols.size());
  for (const auto& name : payload.feature_cols) features.push_back(ds.column(name));
  const auto q = static_cast<Eigen::Index>(features.size());

  const auto gather = [&](const IndexSet& rows, Eigen::MatrixXd& X, Eigen::VectorXd* y) {
    X.resize(static_cast<Eigen::Index>(rows.size()), q);
    if (y) y->resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r] >= ds.n_obs()) {
        throw DmlError(ErrorCode::kInvalidArgument,
                       fmt::format("task '{}': index {} out of range for {} observations", payload.task_id, rows[r],
                                   ds.n_obs()));
      }
      for (Eigen::Index j = 0; j < q; ++j) X(static_cast<Eigen::Index>(r), j) = features[static_cast<std::size_t>(j)][rows[r]];
      if (y) (*y)(static_cast<Eigen::Index>(r)) = target[rows[r]];
    }
  };

  TimedResult out;
  out.result.task_id = payload.task_id;
  const auto start = std::chrono::steady_clock::now();
  Eigen::MatrixXd X_train, X_test;
  Eigen::VectorXd y_train;
  for (const auto& split : payload.splits) {
    gather(split.train, X_train, &y_train);
    gather(split.test, X_test, nullptr);
    const FittedModel model =
        fit(spec, X_train, y_train, split_seed(payload.seed, payload.rep_index, split.fold, payload.nuisance));
    const Eigen::VectorXd pred = predict(model, X_test);
    for (std::size_t i = 0; i < split.test.size(); ++i) {
      out.result.predictions.push_back({split.test[i], pred(static_cast<Eigen::Index>(i))});
    }
  }
  out.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  out.result.duration_ms = static_cast<std::int64_t>(std::ceil(out.elapsed_ms));
  return out;
}

TaskResult execute_task(const TaskPayload& payload, const DmlDataset& ds) {
  return execute_task_timed(payload, ds).result;
}

TaskResult execute_task(const TaskPayload& payload, const ObjectStore& store) {
  return execute_task(payload, fetch_dataset(payload.dataset_ref, store));
}

DatasetSnapshot resolve_datasets(std::span<const TaskPayload> payloads, const ObjectStore& store) {
  DatasetSnapshot snapshot;
  for (const auto& p : payloads) {
    if (snapshot.contains(p.dataset_ref.store_key)) continue;
    try {
      snapshot.emplace(p.dataset_ref.store_key,
                       std::make_shared<const DmlDataset>(fetch_dataset(p.dataset_ref, store)));
    } catch (const DmlError& e) {
      throw DmlError(ErrorCode::kTaskFailed, e.what(), p.task_id);
    }
  }
  return snapshot;
}

std::vector<TaskResult> ExecutionBackend::run_batch(std::span<const TaskPayload> payloads) {
  std::unordered_map<std::string_view, const TaskPayload*> by_id;
  for (const auto& p : payloads) {
    validate_payload(p);
    if (!by_id.emplace(p.task_id, &p).second) {
      throw DmlError(ErrorCode::kInvalidArgument, "duplicate task id in batch", p.task_id);
    }
    if (const auto size = encode_payload(p).size(); size > kMaxWireBytes) {
      throw DmlError(ErrorCode::kPayloadTooLarge, fmt::format("payload is {} bytes > {}", size, kMaxWireBytes),
                     p.task_id);
    }
  }

  std::vector<TaskResult> results = execute_batch(payloads);

  if (results.size() != payloads.size()) {
    throw DmlError(ErrorCode::kIncompleteBatch,
                   fmt::format("{} results for {} payloads", results.size(), payloads.size()));
  }
  std::set<std::string_view> answered;
  for (const auto& r : results) {
    const auto it = by_id.find(r.task_id);
    if (it == by_id.end() || !answered.insert(r.task_id).second) {
      throw DmlError(ErrorCode::kIncompleteBatch, "unexpected or repeated result", r.task_id);
    }
    if (const auto size = encode_result(r).size(); size > kMaxWireBytes) {
      throw DmlError(ErrorCode::kPayloadTooLarge, fmt::format("result is {} bytes > {}", size, kMaxWireBytes),
                     r.task_id);
    }
    std::vector<std::size_t> expected;
    for (const auto& s : it->second->splits) expected.insert(expected.end(), s.test.begin(), s.test.end());
    std::vector<std::size_t> got;
    got.reserve(r.predictions.size());
    for (const auto& p : r.predictions) got.push_back(p.index);
    std::sort(expected.begin(), expected.end());
    std::sort(got.begin(), got.end());
    if (got != expected) {
      throw DmlError(ErrorCode::kIncompleteBatch, "predictions do not cover the test indices exactly once",
                     r.task_id);
    }
  }
  return results;
}

namespace {

// Runs one task and applies the wall-time limit. Any failure is reported as a
// task-level DmlError carrying the task id.
TaskResult run_guarded(const TaskPayload& payload, const DatasetSnapshot& snapshot, std::int64_t time_limit_ms,
                       std::string_view backend) {
  TimedResult timed;
  try {
    timed = execute_task_timed(payload, *snapshot.at(payload.dataset_ref.store_key));
  } catch (const std::exception& e) {
    throw DmlError(ErrorCode::kTaskFailed, e.what(), payload.task_id);
  }
  if (time_limit_ms > 0 && timed.elapsed_ms > static_cast<double>(time_limit_ms)) {
    throw DmlError(ErrorCode::kTaskTimeout,
                   fmt::format("ran {:.3f} ms, limit is {} ms", timed.elapsed_ms, time_limit_ms), payload.task_id);
  }
  timed.result.worker_meta["backend"] = std::string(backend);
  return std::move(timed.result);
}

}  // namespace

SerialBackend::SerialBackend(const ObjectStore& store, std::int64_t time_limit_ms)
    : store_(store), time_limit_ms_(time_limit_ms) {}

std::vector<TaskResult> SerialBackend::execute_batch(std::span<const TaskPayload> payloads) {
  const DatasetSnapshot snapshot = resolve_datasets(payloads, store_);
  std::vector<TaskResult> results;
  results.reserve(payloads.size());
  for (const auto& p : payloads) results.push_back(run_guarded(p, snapshot, time_limit_ms_, name()));
  return results;
}

PoolBackend::PoolBackend(const ObjectStore& store, std::size_t workers, std::int64_t time_limit_ms)
    : store_(store), workers_(std::max<std::size_t>(1, workers)), time_limit_ms_(time_limit_ms) {}

std::vector<TaskResult> PoolBackend::execute_batch(std::span<const TaskPayload> payloads) {
  const DatasetSnapshot snapshot = resolve_datasets(payloads, store_);
  std::vector<std::optional<TaskResult>> slots(payloads.size());
  std::vector<std::optional<DmlError>> errors(payloads.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};

  const auto worker = [&] {
    for (;;) {
      if (abort.load(std::memory_order_acquire)) return;
      const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= payloads.size()) return;
      try {
        slots[i] = run_guarded(payloads[i], snapshot, time_limit_ms_, name());
      } catch (const DmlError& e) {
        errors[i] = e;
        abort.store(true, std::memory_order_release);
      }
    }
  };

  {
    std::vector<std::jthread> threads;
    const std::size_t n_threads = std::min(workers_, payloads.size());
    threads.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  }

  for (auto& e : errors) {
    if (e) throw *e;
  }
  std::vector<TaskResult> results;
  results.reserve(payloads.size());
  for (auto& slot : slots) results.push_back(std::move(*slot));
  return results;
}

}  // namespace dmlsl
