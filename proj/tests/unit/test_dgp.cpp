#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "dmlsl/dgp.hpp"
#include "oracles.hpp"

namespace dmlsl {
namespace {

using testing::error_code_of;

TEST(Dgp, ColumnsAndShape) {
  PlrDgpConfig cfg;
  cfg.n_obs = 20;
  cfg.dim_x = 3;
  const auto ds = generate_plr(cfg);
  ASSERT_EQ(ds.columns().size(), 5u);
  EXPECT_EQ(ds.columns()[0].name, "y");
  EXPECT_EQ(ds.columns()[1].name, "d");
  EXPECT_EQ(ds.columns()[4].name, "x3");
  EXPECT_EQ(ds.roles().x_cols, (std::vector<std::string>{"x1", "x2", "x3"}));
  EXPECT_EQ(ds.n_obs(), 20u);
}

TEST(Dgp, NoiseFreeZeroNuisances) {
  PlrDgpConfig cfg;
  cfg.n_obs = 200;
  cfg.theta0 = 2.0;
  cfg.g_form = FunctionForm::kZero;
  cfg.m_form = FunctionForm::kZero;
  cfg.noise_sd_u = 1e-12;
  cfg.noise_sd_v = 1e-12;
  const auto ds = generate_plr(cfg);
  const auto y = ds.column("y");
  const auto d = ds.column("d");
  for (std::size_t i = 0; i < ds.n_obs(); ++i) EXPECT_NEAR(y[i], 2.0 * d[i], 1e-9);
}

TEST(Dgp, ConditionalMeanStructure) {
  for (auto g : {FunctionForm::kLinear, FunctionForm::kNonlinear}) {
    for (auto m : {FunctionForm::kLinear, FunctionForm::kNonlinear}) {
      PlrDgpConfig cfg;
      cfg.n_obs = 100;
      cfg.dim_x = 4;
      cfg.g_form = g;
      cfg.m_form = m;
      cfg.noise_sd_u = 1e-300;
      cfg.noise_sd_v = 1e-300;
      cfg.seed = 11;
      const auto ds = generate_plr(cfg);
      const auto y = ds.column("y");
      const auto d = ds.column("d");
      for (std::size_t i = 0; i < ds.n_obs(); ++i) {
        std::vector<double> x;
        for (const auto& name : ds.roles().x_cols) x.push_back(ds.column(name)[i]);
        EXPECT_NEAR(d[i] - treatment_nuisance(m, x), 0.0, 1e-12);
        EXPECT_NEAR(y[i] - d[i] * cfg.theta0 - outcome_nuisance(g, x), 0.0, 1e-12);
      }
    }
  }
}

TEST(Dgp, NuisanceForms) {
  const std::vector<double> x{1.0, 2.0, 3.0};
  EXPECT_DOUBLE_EQ(outcome_nuisance(FunctionForm::kLinear, x), 1.0 + 2.0 / 4 + 3.0 / 9);
  EXPECT_DOUBLE_EQ(treatment_nuisance(FunctionForm::kLinear, x), 0.5 + 0.5 + 0.5);
  EXPECT_DOUBLE_EQ(outcome_nuisance(FunctionForm::kNonlinear, x), 1.0 / (1.0 + std::exp(-1.0)) + 0.75);
  EXPECT_DOUBLE_EQ(treatment_nuisance(FunctionForm::kNonlinear, x), 1.0 + 0.25 / (1.0 + std::exp(-3.0)));
  EXPECT_EQ(outcome_nuisance(FunctionForm::kZero, x), 0.0);
}

TEST(Dgp, Deterministic) {
  PlrDgpConfig cfg;
  cfg.seed = 42;
  EXPECT_EQ(generate_plr(cfg), generate_plr(cfg));
  PlrDgpConfig other = cfg;
  other.seed = 43;
  EXPECT_NE(generate_plr(cfg), generate_plr(other));
}

TEST(Dgp, Validation) {
  PlrDgpConfig cfg;
  cfg.n_obs = 1;
  EXPECT_EQ(error_code_of([&] { generate_plr(cfg); }), ErrorCode::kInvalidArgument);
  cfg = {};
  cfg.dim_x = 0;
  EXPECT_EQ(error_code_of([&] { validate(cfg); }), ErrorCode::kInvalidArgument);
  cfg = {};
  cfg.noise_sd_u = 0.0;
  EXPECT_EQ(error_code_of([&] { validate(cfg); }), ErrorCode::kInvalidArgument);
  cfg = {};
  cfg.dim_x = 2;
  cfg.g_form = FunctionForm::kNonlinear;
  EXPECT_EQ(error_code_of([&] { validate(cfg); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(parse_function_form("nonlinear"), FunctionForm::kNonlinear);
  EXPECT_EQ(error_code_of([] { parse_function_form("cubic"); }), ErrorCode::kInvalidArgument);
}

// OLS of y on (1, d, x) is correctly specified under linear forms.
TEST(Dgp, OlsRecoversTheta) {
  PlrDgpConfig cfg;
  cfg.n_obs = 10000;
  cfg.dim_x = 5;
  cfg.theta0 = 0.5;
  cfg.seed = 2024;
  const auto ds = generate_plr(cfg);
  const auto n = static_cast<Eigen::Index>(ds.n_obs());
  Eigen::MatrixXd Z(n, 7);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    Z(i, 0) = 1.0;
    Z(i, 1) = ds.column("d")[r];
    for (int j = 0; j < 5; ++j) Z(i, 2 + j) = ds.column("x" + std::to_string(j + 1))[r];
    y(i) = ds.column("y")[r];
  }
  const Eigen::MatrixXd ZtZ = Z.transpose() * Z;
  const Eigen::VectorXd beta = ZtZ.ldlt().solve(Z.transpose() * y);
  const Eigen::VectorXd resid = y - Z * beta;
  const double sigma2 = resid.squaredNorm() / static_cast<double>(n - 7);
  const double se = std::sqrt(sigma2 * ZtZ.inverse()(1, 1));
  EXPECT_LE(std::abs(beta(1) - 0.5), 3.0 * se) << "theta_hat=" << beta(1) << " se=" << se;
  EXPECT_NEAR(std::sqrt(sigma2), 1.0, 0.05);
}

}  // namespace
}  // namespace dmlsl
