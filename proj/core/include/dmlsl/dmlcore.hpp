#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dmlsl/dataset.hpp"
#include "dmlsl/learners.hpp"
#include "dmlsl/resampling.hpp"
#include "dmlsl/tasking.hpp"

namespace dmlsl {

// Score of the partially linear model, linear in theta:
//   psi(W; theta, eta) = theta * psi_a + psi_b
//   psi_a = -(D - m_hat)^2,  psi_b = (Y - g_hat)(D - m_hat)
struct ScoreArrays {
  std::vector<double> psi_a;
  std::vector<double> psi_b;
  std::size_t rep_index = 0;
};

// Throws LengthMismatch.
ScoreArrays compute_scores(const DmlDataset& ds, std::span<const double> g_hat, std::span<const double> m_hat,
                           std::size_t rep_index = 0);
ScoreArrays compute_scores(std::span<const double> y, std::span<const double> d, std::span<const double> g_hat,
                           std::span<const double> m_hat, std::size_t rep_index = 0);

// |sum psi_a| below this times N counts as no treatment residual variation.
inline constexpr double kDegenerateScoreTolerance = 1e-12;

// theta = -sum(psi_b) / sum(psi_a). Throws DegenerateScore.
double solve_theta(const ScoreArrays& scores);

// Mean of theta * psi_a + psi_b.
double score_mean(const ScoreArrays& scores, double theta);

// Plug-in sandwich variance of theta for one repetition:
//   var = (1/N) * mean(psi_a)^-2 * mean((theta psi_a + psi_b)^2)
double score_variance(const ScoreArrays& scores, double theta);

// Median with the mean of the two middle order statistics for even counts.
double median(std::span<const double> values);

// Two-sided standard normal quantile for a confidence level in (0, 1).
double normal_critical_value(double level);

struct Aggregate {
  double theta = 0.0;
  double se = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
};

// theta = median(theta_m); var = median(var_m + (theta_m - theta)^2);
// CI = theta -/+ z_{(1+level)/2} * se. Throws InvalidArgument.
Aggregate aggregate(std::span<const double> theta_per_rep, std::span<const double> var_per_rep, double level);

struct InvocationTiming {
  std::string task_id;
  std::int64_t duration_ms = 0;
};

struct FitDiagnostics {
  std::size_t n_invocations = 0;
  std::size_t n_learner_fits = 0;
  double fit_time_ms = 0.0;       // wall time of the batch dispatch
  std::int64_t total_task_ms = 0;  // sum of per-task duration_ms
  std::string backend;
  ScalingMode scaling = ScalingMode::kPerRep;
  std::vector<InvocationTiming> invocations;  // in batch order
};

struct DmlFit {
  std::size_t n_obs = 0;
  std::size_t n_folds = 0;
  std::size_t n_rep = 0;
  std::vector<double> theta_per_rep;
  std::vector<double> var_per_rep;
  double theta = 0.0;
  double se = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double level = 0.95;
  std::vector<ScoreArrays> scores;  // one per repetition
  FitDiagnostics diagnostics;
};

struct PlrFitOptions {
  LearnerSpec learner_g = LearnerSpec::ridge(1.0);
  LearnerSpec learner_m = LearnerSpec::ridge(1.0);
  ScalingMode scaling = ScalingMode::kPerRep;
  double level = 0.95;
  std::uint64_t seed = 0;  // master seed for all learner fits
};

// Cross-fitted PLR estimate. Dispatches M * L (per_rep) or M * K * L
// (per_fold) tasks, reassembles predictions by observation index, solves each
// repetition and aggregates. `ref` must resolve to `ds` in the backend's store.
// Propagates TaskTimeout / TaskFailed from the backend.
DmlFit fit_dml_plr(const DmlDataset& ds, const DatasetRef& ref, const FoldPlan& plan, ExecutionBackend& backend,
                   const PlrFitOptions& options);

struct InferenceSummary {
  double theta = 0.0;
  double se = 0.0;
  double t_stat = 0.0;
  double p_value = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double level = 0.95;
};

InferenceSummary infer(const DmlFit& fit);

// Flat "key=value" lines. Timing fields are prefixed with "time_".
std::string to_record(const DmlFit& fit);

}  // namespace dmlsl
