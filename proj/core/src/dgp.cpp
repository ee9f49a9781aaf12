#include "dmlsl/dgp.hpp"

#include <fmt/format.h>

#include <cmath>
#include <string>
#include <vector>

#include "dmlsl/error.hpp"
#include "dmlsl/rng.hpp"

namespace dmlsl {

namespace {

double logistic(double v) { return std::exp(v) / (1.0 + std::exp(v)); }

}  // namespace

std::string_view to_string(FunctionForm form) {
  switch (form) {
    case FunctionForm::kZero: return "zero";
    case FunctionForm::kLinear: return "linear";
    case FunctionForm::kNonlinear: return "nonlinear";
  }
  return "unknown";
}

FunctionForm parse_function_form(std::string_view text) {
  if (text == "zero") return FunctionForm::kZero;
  if (text == "linear") return FunctionForm::kLinear;
  if (text == "nonlinear") return FunctionForm::kNonlinear;
  throw DmlError(ErrorCode::kInvalidArgument, fmt::format("unknown function form '{}'", text));
}

void validate(const PlrDgpConfig& cfg) {
  const auto fail = [](const std::string& msg) { throw DmlError(ErrorCode::kInvalidArgument, msg); };
  if (cfg.n_obs < 2) fail(fmt::format("n_obs must be >= 2, got {}", cfg.n_obs));
  if (cfg.dim_x < 1) fail("dim_x must be >= 1");
  if (!(cfg.noise_sd_u > 0.0) || !(cfg.noise_sd_v > 0.0)) fail("noise standard deviations must be > 0");
  if (!std::isfinite(cfg.theta0)) fail("theta0 must be finite");
  if ((cfg.g_form == FunctionForm::kNonlinear || cfg.m_form == FunctionForm::kNonlinear) && cfg.dim_x < 3) {
    fail("nonlinear forms use x3 and need dim_x >= 3");
  }
}

double outcome_nuisance(FunctionForm form, std::span<const double> x) {
  switch (form) {
    case FunctionForm::kZero: return 0.0;
    case FunctionForm::kLinear: {
      double acc = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double k = static_cast<double>(j + 1);
        acc += x[j] / (k * k);
      }
      return acc;
    }
    case FunctionForm::kNonlinear: return logistic(x[0]) + 0.25 * x[2];
  }
  return 0.0;
}

double treatment_nuisance(FunctionForm form, std::span<const double> x) {
  switch (form) {
    case FunctionForm::kZero: return 0.0;
    case FunctionForm::kLinear: {
      double acc = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) acc += 0.5 * x[j] / static_cast<double>(j + 1);
      return acc;
    }
    case FunctionForm::kNonlinear: return x[0] + 0.25 * logistic(x[2]);
  }
  return 0.0;
}

DmlDataset generate_plr(const PlrDgpConfig& cfg) {
  validate(cfg);
  const std::size_t n = cfg.n_obs;
  const std::size_t p = cfg.dim_x;

  std::vector<Column> columns;
  columns.reserve(p + 2);
  columns.push_back({"y", std::vector<double>(n)});
  columns.push_back({"d", std::vector<double>(n)});
  ColumnRoles roles{"y", "d", {}};
  for (std::size_t j = 0; j < p; ++j) {
    columns.push_back({fmt::format("x{}", j + 1), std::vector<double>(n)});
    roles.x_cols.push_back(columns.back().name);
  }

  Rng rng(cfg.seed);
  std::vector<double> x(p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) x[j] = rng.normal();
    const double v = cfg.noise_sd_v * rng.normal();
    const double u = cfg.noise_sd_u * rng.normal();
    const double d = treatment_nuisance(cfg.m_form, x) + v;
    columns[0].values[i] = d * cfg.theta0 + outcome_nuisance(cfg.g_form, x) + u;
    columns[1].values[i] = d;
    for (std::size_t j = 0; j < p; ++j) columns[j + 2].values[i] = x[j];
  }
  return DmlDataset::create(std::move(columns), std::move(roles));
}

}  // namespace dmlsl
