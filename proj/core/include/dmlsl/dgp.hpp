#pragma once

#include <cstdint>
#include <span>
#include <string_view>

#include "dmlsl/dataset.hpp"

namespace dmlsl {

// Nuisance function shapes. kZero switches the component off entirely.
//   linear     g(x) = sum_j x_j / j^2          m(x) = sum_j 0.5 x_j / j
//   nonlinear  g(x) = logistic(x_1) + 0.25 x_3  m(x) = x_1 + 0.25 logistic(x_3)
// The nonlinear forms need dim_x >= 3.
enum class FunctionForm { kZero, kLinear, kNonlinear };

std::string_view to_string(FunctionForm form);
FunctionForm parse_function_form(std::string_view text);

// Partially linear model: D = m0(X) + V, Y = D theta0 + g0(X) + U, with
// X ~ N(0, I), U ~ N(0, sd_u^2), V ~ N(0, sd_v^2) independent.
struct PlrDgpConfig {
  std::size_t n_obs = 500;
  std::size_t dim_x = 5;
  double theta0 = 0.5;
  FunctionForm g_form = FunctionForm::kLinear;
  FunctionForm m_form = FunctionForm::kLinear;
  double noise_sd_u = 1.0;
  double noise_sd_v = 1.0;
  std::uint64_t seed = 0;
};

void validate(const PlrDgpConfig& cfg);

double outcome_nuisance(FunctionForm form, std::span<const double> x);
double treatment_nuisance(FunctionForm form, std::span<const double> x);

// Columns y, d, x1..x{dim_x}. Each row draws x_1..x_p, then V, then U from a
// single Rng(seed) stream, so output is a pure function of cfg.
DmlDataset generate_plr(const PlrDgpConfig& cfg);

}  // namespace dmlsl
