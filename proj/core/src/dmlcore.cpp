#include "dmlsl/dmlcore.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <chrono>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "dmlsl/error.hpp"
#include "dmlsl/numfmt.hpp"

namespace dmlsl {

ScoreArrays compute_scores(std::span<const double> y, std::span<const double> d, std::span<const double> g_hat,
                           std::span<const double> m_hat, std::size_t rep_index) {
  const std::size_t n = y.size();
  if (d.size() != n || g_hat.size() != n || m_hat.size() != n) {
    throw DmlError(ErrorCode::kLengthMismatch, fmt::format("score inputs have lengths y={} d={} g_hat={} m_hat={}", n,
                                                           d.size(), g_hat.size(), m_hat.size()));
  }
  ScoreArrays s;
  s.rep_index = rep_index;
  s.psi_a.resize(n);
  s.psi_b.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = d[i] - m_hat[i];
    const double u = y[i] - g_hat[i];
    s.psi_a[i] = -v * v;
    s.psi_b[i] = u * v;
  }
  return s;
}

ScoreArrays compute_scores(const DmlDataset& ds, std::span<const double> g_hat, std::span<const double> m_hat,
                           std::size_t rep_index) {
  return compute_scores(ds.column(ds.roles().y_col), ds.column(ds.roles().d_col), g_hat, m_hat, rep_index);
}

double solve_theta(const ScoreArrays& scores) {
  const std::size_t n = scores.psi_a.size();
  if (scores.psi_b.size() != n) throw DmlError(ErrorCode::kLengthMismatch, "psi_a and psi_b differ in length");
  double sum_a = 0.0;
  double sum_b = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum_a += scores.psi_a[i];
    sum_b += scores.psi_b[i];
  }
  if (n == 0 || std::abs(sum_a) < kDegenerateScoreTolerance * static_cast<double>(n)) {
    throw DmlError(ErrorCode::kDegenerateScore,
                   fmt::format("sum of psi_a is {} for repetition {}", sum_a, scores.rep_index));
  }
  return -sum_b / sum_a;
}

double score_mean(const ScoreArrays& scores, double theta) {
  double acc = 0.0;
  for (std::size_t i = 0; i < scores.psi_a.size(); ++i) acc += theta * scores.psi_a[i] + scores.psi_b[i];
  return acc / static_cast<double>(scores.psi_a.size());
}

double score_variance(const ScoreArrays& scores, double theta) {
  const auto n = static_cast<double>(scores.psi_a.size());
  double mean_a = 0.0;
  double mean_sq = 0.0;
  for (std::size_t i = 0; i < scores.psi_a.size(); ++i) {
    const double psi = theta * scores.psi_a[i] + scores.psi_b[i];
    mean_a += scores.psi_a[i];
    mean_sq += psi * psi;
  }
  mean_a /= n;
  mean_sq /= n;
  return mean_sq / (mean_a * mean_a) / n;
}

double median(std::span<const double> values) {
  if (values.empty()) throw DmlError(ErrorCode::kInvalidArgument, "median of an empty sequence");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  if (sorted.size() % 2 == 1) return sorted[mid];
  return (sorted[mid - 1] + sorted[mid]) / 2.0;
}

double normal_critical_value(double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw DmlError(ErrorCode::kInvalidArgument, fmt::format("confidence level {} not in (0, 1)", level));
  }
  return boost::math::quantile(boost::math::normal(), 0.5 + level / 2.0);
}

Aggregate aggregate(std::span<const double> theta_per_rep, std::span<const double> var_per_rep, double level) {
  if (theta_per_rep.empty() || theta_per_rep.size() != var_per_rep.size()) {
    throw DmlError(ErrorCode::kInvalidArgument, fmt::format("{} estimates with {} variances", theta_per_rep.size(),
                                                            var_per_rep.size()));
  }
  for (double v : var_per_rep) {
    if (!(v >= 0.0)) throw DmlError(ErrorCode::kInvalidArgument, "variances must be non-negative");
  }
  const double z = normal_critical_value(level);

  Aggregate out;
  out.theta = median(theta_per_rep);
  std::vector<double> adjusted(var_per_rep.size());
  for (std::size_t m = 0; m < adjusted.size(); ++m) {
    const double dev = theta_per_rep[m] - out.theta;
    adjusted[m] = var_per_rep[m] + dev * dev;
  }
  out.se = std::sqrt(median(adjusted));
  out.ci_lower = out.theta - z * out.se;
  out.ci_upper = out.theta + z * out.se;
  return out;
}

DmlFit fit_dml_plr(const DmlDataset& ds, const DatasetRef& ref, const FoldPlan& plan, ExecutionBackend& backend,
                   const PlrFitOptions& options) {
  if (plan.n_obs() != ds.n_obs()) {
    throw DmlError(ErrorCode::kLengthMismatch,
                   fmt::format("fold plan covers {} observations, dataset has {}", plan.n_obs(), ds.n_obs()));
  }
  normal_critical_value(options.level);
  validate(options.learner_g);
  validate(options.learner_m);

  const std::vector<NuisanceJob> jobs = {{outcome_target(ds.roles()), options.learner_g},
                                         {treatment_target(ds.roles()), options.learner_m}};
  const std::vector<TaskPayload> batch = build_batch(ref, plan, jobs, options.scaling, options.seed);

  const auto start = std::chrono::steady_clock::now();
  const std::vector<TaskResult> results = backend.run_batch(batch);
  const double fit_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

  // Reassemble by observation index; arrival order is irrelevant.
  const std::size_t n = ds.n_obs();
  const std::size_t M = plan.n_rep();
  constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::vector<double>> g_hat(M, std::vector<double>(n, kUnset));
  std::vector<std::vector<double>> m_hat(M, std::vector<double>(n, kUnset));

  std::unordered_map<std::string_view, const TaskPayload*> by_id;
  for (const auto& p : batch) by_id.emplace(p.task_id, &p);

  FitDiagnostics diag;
  diag.n_invocations = batch.size();
  diag.fit_time_ms = fit_time_ms;
  diag.backend = backend.name();
  diag.scaling = options.scaling;
  for (const auto& p : batch) diag.n_learner_fits += p.splits.size();

  for (const auto& r : results) {
    const TaskPayload& p = *by_id.at(r.task_id);
    auto& target = p.nuisance == Nuisance::kG ? g_hat[p.rep_index] : m_hat[p.rep_index];
    for (const auto& pred : r.predictions) {
      if (!std::isnan(target[pred.index])) {
        throw DmlError(ErrorCode::kIncompleteBatch, fmt::format("observation {} predicted twice", pred.index),
                       r.task_id);
      }
      if (!std::isfinite(pred.value)) {
        throw DmlError(ErrorCode::kTaskFailed, fmt::format("non-finite prediction for observation {}", pred.index),
                       r.task_id);
      }
      target[pred.index] = pred.value;
    }
    diag.total_task_ms += r.duration_ms;
  }
  std::unordered_map<std::string_view, std::int64_t> durations;
  for (const auto& r : results) durations.emplace(r.task_id, r.duration_ms);
  for (const auto& p : batch) diag.invocations.push_back({p.task_id, durations.at(p.task_id)});

  DmlFit fit;
  fit.n_obs = n;
  fit.n_folds = plan.n_folds();
  fit.n_rep = M;
  fit.level = options.level;
  fit.diagnostics = diag;
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t i = 0; i < n; ++i) {
      if (std::isnan(g_hat[m][i]) || std::isnan(m_hat[m][i])) {
        throw DmlError(ErrorCode::kIncompleteBatch,
                       fmt::format("observation {} has no prediction in repetition {}", i, m));
      }
    }
    ScoreArrays scores = compute_scores(ds, g_hat[m], m_hat[m], m);
    const double theta = solve_theta(scores);
    fit.theta_per_rep.push_back(theta);
    fit.var_per_rep.push_back(score_variance(scores, theta));
    fit.scores.push_back(std::move(scores));
  }

  const Aggregate agg = aggregate(fit.theta_per_rep, fit.var_per_rep, options.level);
  fit.theta = agg.theta;
  fit.se = agg.se;
  fit.ci_lower = agg.ci_lower;
  fit.ci_upper = agg.ci_upper;
  return fit;
}

InferenceSummary infer(const DmlFit& fit) {
  InferenceSummary s;
  s.theta = fit.theta;
  s.se = fit.se;
  s.level = fit.level;
  s.ci_lower = fit.ci_lower;
  s.ci_upper = fit.ci_upper;
  if (fit.se > 0.0) {
    s.t_stat = fit.theta / fit.se;
  } else {
    s.t_stat = fit.theta == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), fit.theta);
  }
  s.p_value = std::isinf(s.t_stat) ? 0.0 : 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal(), std::abs(s.t_stat)));
  return s;
}

std::string to_record(const DmlFit& fit) {
  const InferenceSummary s = infer(fit);
  std::string out;
  const auto put = [&](std::string_view key, const std::string& value) { out += fmt::format("{}={}\n", key, value); };
  put("theta", format_double(s.theta));
  put("se", format_double(s.se));
  put("t_stat", format_double(s.t_stat));
  put("p_value", format_double(s.p_value));
  put("level", format_double(s.level));
  put("ci_lower", format_double(s.ci_lower));
  put("ci_upper", format_double(s.ci_upper));
  put("n_obs", std::to_string(fit.n_obs));
  put("n_folds", std::to_string(fit.n_folds));
  put("n_rep", std::to_string(fit.n_rep));
  put("scaling", std::string(to_string(fit.diagnostics.scaling)));
  put("invocations", std::to_string(fit.diagnostics.n_invocations));
  put("learner_fits", std::to_string(fit.diagnostics.n_learner_fits));
  std::string thetas;
  for (std::size_t m = 0; m < fit.theta_per_rep.size(); ++m) {
    if (m > 0) thetas.push_back(',');
    thetas += format_double(fit.theta_per_rep[m]);
  }
  put("theta_per_rep", thetas);
  put("time_fit_ms", fmt::format("{:.3f}", fit.diagnostics.fit_time_ms));
  put("time_task_ms_total", std::to_string(fit.diagnostics.total_task_ms));
  return out;
}

}  // namespace dmlsl
