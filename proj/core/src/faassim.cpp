#include "dmlsl/faassim.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <queue>
#include <sstream>

#include "dmlsl/error.hpp"
#include "dmlsl/numfmt.hpp"
#include "dmlsl/rng.hpp"

namespace dmlsl {

namespace {

[[noreturn]] void invalid(const std::string& msg) { throw DmlError(ErrorCode::kInvalidArgument, msg); }

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    out.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return out;
}

}  // namespace

void validate(const SimConfig& cfg) {
  if (cfg.memory_mb < kMinMemoryMb || cfg.memory_mb > kMaxMemoryMb) {
    invalid(fmt::format("memory_mb {} outside [{}, {}]", cfg.memory_mb, kMinMemoryMb, kMaxMemoryMb));
  }
  if (cfg.cpu_reference_mb < kMinMemoryMb) invalid("cpu_reference_mb must be >= 128");
  if (cfg.cpu_cap_mb < cfg.cpu_reference_mb) invalid("cpu_cap_mb must be >= cpu_reference_mb");
  if (!(cfg.speed_exponent > 0.0) || !std::isfinite(cfg.speed_exponent)) invalid("speed_exponent must be > 0");
  if (cfg.cold_start_ms < 0) invalid("cold_start_ms must be >= 0");
  if (!(cfg.warm_fraction >= 0.0 && cfg.warm_fraction <= 1.0)) invalid("warm_fraction must be in [0, 1]");
  if (cfg.max_runtime_ms <= 0) invalid("max_runtime_ms must be > 0");
  if (!(cfg.price_per_gb_s >= 0.0) || !std::isfinite(cfg.price_per_gb_s)) invalid("price_per_gb_s must be >= 0");
  if (cfg.billing_granularity_ms <= 0) invalid("billing_granularity_ms must be > 0");
}

SimConfig parse_sim_config(std::string_view text, SimConfig cfg) {
  std::size_t line_no = 0;
  for (std::string_view line : lines_of(text)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) invalid(fmt::format("sim config line {}: expected key=value", line_no));
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));

    const auto as_int = [&]() -> long long {
      const auto v = parse_int(value);
      if (!v) invalid(fmt::format("sim config line {}: '{}' needs an integer", line_no, key));
      return *v;
    };
    const auto as_double = [&]() -> double {
      const auto v = parse_double(value);
      if (!v) invalid(fmt::format("sim config line {}: '{}' needs a number", line_no, key));
      return *v;
    };

    if (key == "memory_mb") {
      cfg.memory_mb = static_cast<int>(as_int());
    } else if (key == "cpu_reference_mb") {
      cfg.cpu_reference_mb = static_cast<int>(as_int());
    } else if (key == "cpu_cap_mb") {
      cfg.cpu_cap_mb = static_cast<int>(as_int());
    } else if (key == "speed_exponent") {
      cfg.speed_exponent = as_double();
    } else if (key == "cold_start_ms") {
      cfg.cold_start_ms = as_int();
    } else if (key == "warm_fraction") {
      cfg.warm_fraction = as_double();
    } else if (key == "max_concurrency") {
      if (value == "unbounded") {
        cfg.max_concurrency = 0;
      } else {
        const long long v = as_int();
        if (v < 0) invalid("max_concurrency must be >= 0");
        cfg.max_concurrency = static_cast<std::size_t>(v);
      }
    } else if (key == "max_runtime_ms") {
      cfg.max_runtime_ms = as_int();
    } else if (key == "price_per_gb_s") {
      cfg.price_per_gb_s = as_double();
    } else if (key == "billing_granularity_ms") {
      cfg.billing_granularity_ms = as_int();
    } else if (key == "seed") {
      const auto v = parse_uint(value);
      if (!v) invalid(fmt::format("sim config line {}: 'seed' needs an unsigned integer", line_no));
      cfg.seed = *v;
    } else {
      invalid(fmt::format("sim config line {}: unknown key '{}'", line_no, key));
    }
  }
  validate(cfg);
  return cfg;
}

SimConfig load_sim_config(const std::filesystem::path& path, SimConfig base) {
  std::ifstream in(path);
  if (!in) throw DmlError(ErrorCode::kIo, fmt::format("cannot open sim config '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_sim_config(buf.str(), base);
}

std::string to_config_text(const SimConfig& cfg) {
  return fmt::format(
      "memory_mb={}\ncpu_reference_mb={}\ncpu_cap_mb={}\nspeed_exponent={}\ncold_start_ms={}\nwarm_fraction={}\n"
      "max_concurrency={}\nmax_runtime_ms={}\nprice_per_gb_s={}\nbilling_granularity_ms={}\nseed={}\n",
      cfg.memory_mb, cfg.cpu_reference_mb, cfg.cpu_cap_mb, format_double(cfg.speed_exponent), cfg.cold_start_ms,
      format_double(cfg.warm_fraction),
      cfg.max_concurrency == 0 ? std::string("unbounded") : std::to_string(cfg.max_concurrency), cfg.max_runtime_ms,
      format_double(cfg.price_per_gb_s), cfg.billing_granularity_ms, cfg.seed);
}

std::int64_t simulate_service_time(std::int64_t base_ms, const SimConfig& cfg) {
  if (base_ms < 0) invalid("base_ms must be >= 0");
  const double effective = std::min(cfg.memory_mb, cfg.cpu_cap_mb);
  const double factor = std::pow(static_cast<double>(cfg.cpu_reference_mb) / effective, cfg.speed_exponent);
  return std::llround(static_cast<double>(base_ms) * factor);
}

std::int64_t billed_duration_ms(std::int64_t service_ms, std::int64_t granularity_ms) {
  return (service_ms + granularity_ms - 1) / granularity_ms * granularity_ms;
}

double gb_seconds(int memory_mb, std::int64_t billed_ms) {
  return static_cast<double>(memory_mb) / 1024.0 * (static_cast<double>(billed_ms) / 1000.0);
}

double cost_usd(double total_gb_seconds, double price_per_gb_s) { return total_gb_seconds * price_per_gb_s; }

std::string profile_to_csv(const WorkloadProfile& profile) {
  std::string out = "task_id,base_ms\n";
  for (const auto& w : profile) out += fmt::format("{},{}\n", w.task_id, w.base_ms);
  return out;
}

WorkloadProfile parse_profile_csv(std::string_view text) {
  WorkloadProfile profile;
  bool header = true;
  std::size_t line_no = 0;
  for (std::string_view line : lines_of(text)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    if (header) {
      if (line != "task_id,base_ms") invalid("profile csv must start with header task_id,base_ms");
      header = false;
      continue;
    }
    const auto comma = line.rfind(',');
    const auto base = comma == std::string_view::npos ? std::nullopt : parse_int(line.substr(comma + 1));
    if (!base || *base < 0) invalid(fmt::format("profile csv line {}: expected task_id,base_ms", line_no));
    profile.push_back({std::string(trim(line.substr(0, comma))), *base});
  }
  if (header) invalid("profile csv is empty");
  return profile;
}

BillingLedger simulate_ledger(std::span<const WorkItem> profile, const SimConfig& cfg) {
  validate(cfg);
  BillingLedger ledger;
  ledger.memory_mb = cfg.memory_mb;
  ledger.price_per_gb_s = cfg.price_per_gb_s;
  ledger.records.reserve(profile.size());

  Rng warm_rng(cfg.seed);
  std::priority_queue<std::int64_t, std::vector<std::int64_t>, std::greater<>> free_at;
  for (const auto& item : profile) {
    InvocationRecord rec;
    rec.task_id = item.task_id;
    rec.memory_mb = cfg.memory_mb;
    rec.cold = !(warm_rng.uniform() < cfg.warm_fraction);

    if (cfg.max_concurrency > 0 && free_at.size() >= cfg.max_concurrency) {
      rec.start_ms = free_at.top();
      free_at.pop();
    }
    rec.service_ms = simulate_service_time(item.base_ms, cfg);
    if (rec.service_ms > cfg.max_runtime_ms) {
      rec.timed_out = true;
      rec.service_ms = cfg.max_runtime_ms;
      if (!ledger.first_timeout) ledger.first_timeout = item.task_id;
    }
    rec.end_ms = rec.start_ms + (rec.cold ? cfg.cold_start_ms : 0) + rec.service_ms;
    rec.billed_ms = billed_duration_ms(rec.service_ms, cfg.billing_granularity_ms);
    rec.gb_seconds = gb_seconds(cfg.memory_mb, rec.billed_ms);
    if (cfg.max_concurrency > 0) free_at.push(rec.end_ms);

    ledger.total_gb_seconds += rec.gb_seconds;
    ledger.makespan_ms = std::max(ledger.makespan_ms, rec.end_ms);
    ledger.records.push_back(std::move(rec));
  }
  ledger.invocations = ledger.records.size();
  ledger.total_usd = cost_usd(ledger.total_gb_seconds, cfg.price_per_gb_s);
  return ledger;
}

std::string ledger_to_csv(const BillingLedger& ledger) {
  std::string out = "task_id,cold,memory_mb,service_ms,billed_ms,gb_seconds\n";
  for (const auto& r : ledger.records) {
    out += fmt::format("{},{},{},{},{},{}\n", r.task_id, r.cold ? 1 : 0, r.memory_mb, r.service_ms, r.billed_ms,
                       format_double(r.gb_seconds));
  }
  return out;
}

FaasSimBackend::FaasSimBackend(const ObjectStore& store, SimConfig cfg) : store_(store), cfg_(cfg) { validate(cfg_); }

FaasSimBackend::FaasSimBackend(const ObjectStore& store, SimConfig cfg,
                               std::map<std::string, std::int64_t, std::less<>> synthetic)
    : store_(store), cfg_(cfg), synthetic_(std::move(synthetic)) {
  validate(cfg_);
}

BackendCapabilities FaasSimBackend::capabilities() const { return {cfg_.max_concurrency, cfg_.max_runtime_ms}; }

void FaasSimBackend::set_config(SimConfig cfg) {
  validate(cfg);
  cfg_ = cfg;
}

std::vector<TaskResult> FaasSimBackend::execute_batch(std::span<const TaskPayload> payloads) {
  if (synthetic_) {
    for (const auto& p : payloads) {
      if (!synthetic_->contains(p.task_id)) invalid(fmt::format("synthetic profile has no entry for '{}'", p.task_id));
    }
  }
  const DatasetSnapshot snapshot = resolve_datasets(payloads, store_);

  std::vector<TaskResult> results;
  results.reserve(payloads.size());
  profile_.clear();
  for (const auto& p : payloads) {
    // The worker only sees what crosses the wire.
    const TaskPayload received = decode_payload(encode_payload(p));
    TimedResult timed;
    try {
      timed = execute_task_timed(received, *snapshot.at(received.dataset_ref.store_key));
    } catch (const std::exception& e) {
      throw DmlError(ErrorCode::kTaskFailed, e.what(), p.task_id);
    }
    const std::int64_t base = synthetic_ ? synthetic_->find(p.task_id)->second : timed.result.duration_ms;
    profile_.push_back({p.task_id, base});
    results.push_back(std::move(timed.result));
  }

  ledger_ = simulate_ledger(profile_, cfg_);
  if (ledger_.first_timeout) {
    throw DmlError(ErrorCode::kTaskTimeout,
                   fmt::format("simulated service time exceeds the {} ms runtime cap", cfg_.max_runtime_ms),
                   *ledger_.first_timeout);
  }
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& rec = ledger_.records[i];
    results[i].duration_ms = rec.service_ms;
    results[i].worker_meta = {{"backend", "faas-sim"},
                              {"cold", rec.cold ? "1" : "0"},
                              {"memory_mb", std::to_string(rec.memory_mb)},
                              {"billed_ms", std::to_string(rec.billed_ms)}};
    results[i] = decode_result(encode_result(results[i]));
  }
  return results;
}

std::vector<SweepRow> sweep_cost(std::span<const ScalingWorkload> workloads, std::span<const int> memory_grid,
                                 const SimConfig& tmpl) {
  if (memory_grid.empty()) invalid("memory grid is empty");
  std::vector<SweepRow> rows;
  rows.reserve(memory_grid.size() * workloads.size());
  for (int memory : memory_grid) {
    for (const auto& w : workloads) {
      SimConfig cfg = tmpl;
      cfg.memory_mb = memory;
      cfg.seed = derive_seed(tmpl.seed, {static_cast<std::uint64_t>(w.repeat)});
      const BillingLedger ledger = simulate_ledger(w.profile, cfg);
      rows.push_back({memory, w.scaling, w.repeat, ledger.invocations, ledger.makespan_ms, ledger.total_gb_seconds,
                      ledger.total_usd, ledger.first_timeout.has_value()});
    }
  }
  return rows;
}

std::string sweep_to_csv(std::span<const SweepRow> rows) {
  std::string out = "memory_mb,scaling,repeat,invocations,makespan_ms,gb_seconds,usd,timed_out\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{}\n", r.memory_mb, to_string(r.scaling), r.repeat, r.invocations,
                       r.makespan_ms, format_double(r.gb_seconds), format_double(r.usd), r.timed_out ? 1 : 0);
  }
  return out;
}

}  // namespace dmlsl
