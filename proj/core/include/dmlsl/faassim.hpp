#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dmlsl/tasking.hpp"

namespace dmlsl {

// Model of a function-as-a-service platform. CPU speed follows a saturating
// power law in allocated memory:
//   service_ms = round(base_ms * (cpu_reference_mb / min(memory_mb, cpu_cap_mb))^speed_exponent)
// where base_ms is the task's duration at cpu_reference_mb. Billing is per
// invocation: billed_ms = ceil(service_ms / granularity) * granularity and
// gb_seconds = memory_mb / 1024 * billed_ms / 1000.
struct SimConfig {
  int memory_mb = 1024;
  int cpu_reference_mb = 1769;  // one full vCPU
  int cpu_cap_mb = 10240;
  double speed_exponent = 0.8;
  std::int64_t cold_start_ms = 300;
  double warm_fraction = 1.0;      // probability an invocation lands on a warm worker
  std::size_t max_concurrency = 0;  // 0 = unbounded
  std::int64_t max_runtime_ms = 900'000;
  double price_per_gb_s = 0.0000166667;
  std::int64_t billing_granularity_ms = 1;
  std::uint64_t seed = 0;  // cold/warm draws

  bool operator==(const SimConfig&) const = default;
};

inline constexpr int kMinMemoryMb = 128;
inline constexpr int kMaxMemoryMb = 10240;

// Throws InvalidArgument.
void validate(const SimConfig& cfg);

// "key=value" lines using the field names above; '#' starts a comment.
// max_concurrency also accepts "unbounded". Unset keys keep `base` values.
SimConfig parse_sim_config(std::string_view text, SimConfig base = {});
SimConfig load_sim_config(const std::filesystem::path& path, SimConfig base = {});
std::string to_config_text(const SimConfig& cfg);

std::int64_t simulate_service_time(std::int64_t base_ms, const SimConfig& cfg);
std::int64_t billed_duration_ms(std::int64_t service_ms, std::int64_t granularity_ms);
double gb_seconds(int memory_mb, std::int64_t billed_ms);
double cost_usd(double total_gb_seconds, double price_per_gb_s);

struct WorkItem {
  std::string task_id;
  std::int64_t base_ms = 0;

  bool operator==(const WorkItem&) const = default;
};

// Tasks in dispatch order with their duration at the reference memory.
using WorkloadProfile = std::vector<WorkItem>;

std::string profile_to_csv(const WorkloadProfile& profile);
WorkloadProfile parse_profile_csv(std::string_view text);

struct InvocationRecord {
  std::string task_id;
  bool cold = false;
  bool timed_out = false;
  int memory_mb = 0;
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  std::int64_t service_ms = 0;  // capped at max_runtime_ms for timed-out tasks
  std::int64_t billed_ms = 0;
  double gb_seconds = 0.0;
};

struct BillingLedger {
  int memory_mb = 0;
  double price_per_gb_s = 0.0;
  std::vector<InvocationRecord> records;
  std::size_t invocations = 0;
  double total_gb_seconds = 0.0;
  double total_usd = 0.0;
  std::int64_t makespan_ms = 0;
  std::optional<std::string> first_timeout;  // first task, in dispatch order, over the runtime cap
};

// Single-threaded event loop: every task is submitted at t=0 in profile order
// and starts on the earliest free slot (immediately when unbounded). An
// invocation is warm when Rng(cfg.seed)'s next uniform() < warm_fraction and
// otherwise pays cold_start_ms before its service time. Cold start time is
// not billed.
BillingLedger simulate_ledger(std::span<const WorkItem> profile, const SimConfig& cfg);

// Columns: task_id,cold,memory_mb,service_ms,billed_ms,gb_seconds
std::string ledger_to_csv(const BillingLedger& ledger);

// Runs the real learner work, so predictions are exactly those of the serial
// backend; only time and cost metadata are simulated. Payloads and results
// pass through the JSON wire encoding. In measured mode each task's base_ms is
// its own fit+predict wall time on this machine; in synthetic mode it comes
// from a caller-supplied map keyed by task id.
class FaasSimBackend final : public ExecutionBackend {
 public:
  FaasSimBackend(const ObjectStore& store, SimConfig cfg);
  FaasSimBackend(const ObjectStore& store, SimConfig cfg, std::map<std::string, std::int64_t, std::less<>> synthetic);

  std::string name() const override { return "faas-sim"; }
  BackendCapabilities capabilities() const override;

  const SimConfig& config() const noexcept { return cfg_; }
  void set_config(SimConfig cfg);

  // From the most recent run_batch, including failed ones.
  const BillingLedger& last_ledger() const noexcept { return ledger_; }
  const WorkloadProfile& last_profile() const noexcept { return profile_; }

 protected:
  std::vector<TaskResult> execute_batch(std::span<const TaskPayload> payloads) override;

 private:
  const ObjectStore& store_;
  SimConfig cfg_;
  std::optional<std::map<std::string, std::int64_t, std::less<>>> synthetic_;
  BillingLedger ledger_;
  WorkloadProfile profile_;
};

struct ScalingWorkload {
  ScalingMode scaling = ScalingMode::kPerRep;
  std::size_t repeat = 0;
  WorkloadProfile profile;
};

struct SweepRow {
  int memory_mb = 0;
  ScalingMode scaling = ScalingMode::kPerRep;
  std::size_t repeat = 0;
  std::size_t invocations = 0;
  std::int64_t makespan_ms = 0;
  double gb_seconds = 0.0;
  double usd = 0.0;
  bool timed_out = false;
};

// One ledger per (memory, workload) cell, memory-major. Repeat r draws cold
// starts with seed derive_seed(tmpl.seed, {r}).
std::vector<SweepRow> sweep_cost(std::span<const ScalingWorkload> workloads, std::span<const int> memory_grid,
                                 const SimConfig& tmpl);

// Columns: memory_mb,scaling,repeat,invocations,makespan_ms,gb_seconds,usd,timed_out
std::string sweep_to_csv(std::span<const SweepRow> rows);

}  // namespace dmlsl
