#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dmlsl/dataset.hpp"
#include "dmlsl/dgp.hpp"
#include "dmlsl/dmlcore.hpp"
#include "dmlsl/faassim.hpp"

namespace dmlsl::cli {

enum class BackendKind { kSerial, kPool, kFaasSim };

// Everything a fit needs. `dataset` is a CSV path or an inline generator
// spec "dgp:n=2000,dim_x=5,theta=0.5[,g=linear][,m=linear][,noise_u=1][,noise_v=1]".
struct RunConfig {
  std::string dataset;
  std::string y_col = "y";
  std::string d_col = "d";
  std::vector<std::string> x_cols;  // empty = every column except y and d
  std::string learner_g = "ridge(lambda=1)";
  std::string learner_m = "ridge(lambda=1)";
  std::size_t n_folds = 5;
  std::size_t n_rep = 100;
  ScalingMode scaling = ScalingMode::kPerRep;
  BackendKind backend = BackendKind::kSerial;
  std::size_t workers = 4;
  std::optional<std::filesystem::path> sim_config;
  std::optional<int> memory_mb;
  std::int64_t time_limit_ms = 0;
  std::uint64_t seed = 0;
  double level = 0.95;
  std::filesystem::path store = ".dmlsl-store";
};

// Applies the reemployment-bonus recipe: outcome inuidur1, treatment tg,
// 15 controls, 500-tree forests for both nuisances, K=5, M=100.
void apply_bonus_preset(RunConfig& cfg);

SimConfig resolve_sim_config(const RunConfig& cfg);

struct FitOutcome {
  DmlFit fit;
  std::string record;  // key=value lines
  std::optional<BillingLedger> ledger;
  std::optional<WorkloadProfile> profile;
};

// Validates the whole configuration before any learner runs.
FitOutcome cmd_fit(const RunConfig& cfg);

// Writes the CSV and a "<out>.meta" sidecar with the generator settings.
void cmd_generate(const PlrDgpConfig& dgp, const std::filesystem::path& out);

struct SweepOptions {
  RunConfig run;
  std::vector<int> memory_grid = {256, 512, 1024, 2048};
  std::vector<ScalingMode> scalings = {ScalingMode::kPerRep, ScalingMode::kPerFold};
  std::size_t repeats = 1;
};

// Each (scaling, repeat) runs the real estimation once on the simulator to
// measure its workload profile; every memory setting is then replayed from it.
std::vector<SweepRow> cmd_sweep(const SweepOptions& opts);

BillingLedger cmd_simulate_cost(const WorkloadProfile& profile, const SimConfig& cfg);

// Entry point shared by the executable and the tests. Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dmlsl::cli
