#include <benchmark/benchmark.h>

#include <filesystem>

#include "dmlsl/dgp.hpp"
#include "dmlsl/faassim.hpp"
#include "dmlsl/learners.hpp"
#include "dmlsl/resampling.hpp"
#include "dmlsl/rng.hpp"
#include "dmlsl/tasking.hpp"

namespace {

using namespace dmlsl;

struct Xy {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

Xy make_data(Eigen::Index n, Eigen::Index q) {
  Rng rng(1);
  Xy d{Eigen::MatrixXd(n, q), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < q; ++j) d.X(i, j) = rng.normal();
    d.y(i) = d.X(i, 0) + 0.5 * rng.normal();
  }
  return d;
}

void BM_RidgeFit(benchmark::State& state) {
  const auto d = make_data(state.range(0), 15);
  for (auto _ : state) benchmark::DoNotOptimize(fit(LearnerSpec::ridge(1.0), d.X, d.y, 0));
}
BENCHMARK(BM_RidgeFit)->Arg(1000)->Arg(4000);

void BM_TreeFit(benchmark::State& state) {
  const auto d = make_data(state.range(0), 15);
  for (auto _ : state) benchmark::DoNotOptimize(fit_tree(d.X, d.y, {}, 0));
}
BENCHMARK(BM_TreeFit)->Arg(500)->Arg(4000);

void BM_ForestFit(benchmark::State& state) {
  const auto d = make_data(4000, 15);
  const auto spec = LearnerSpec::random_forest(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fit(spec, d.X, d.y, 0));
}
BENCHMARK(BM_ForestFit)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_DrawFolds(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(draw_folds(static_cast<std::size_t>(state.range(0)), 5, 100, 7));
}
BENCHMARK(BM_DrawFolds)->Arg(5099)->Unit(benchmark::kMillisecond);

void BM_BuildBatch(benchmark::State& state) {
  const auto plan = draw_folds(5099, 5, 100, 7);
  const ColumnRoles roles{"y", "d", {"x1", "x2"}};
  const std::vector<NuisanceJob> jobs{{outcome_target(roles), LearnerSpec::ridge(1)},
                                      {treatment_target(roles), LearnerSpec::ridge(1)}};
  const DatasetRef ref{std::string(64, 'a'), std::string(64, 'b')};
  const auto mode = state.range(0) ? ScalingMode::kPerFold : ScalingMode::kPerRep;
  for (auto _ : state) benchmark::DoNotOptimize(build_batch(ref, plan, jobs, mode, 0));
}
BENCHMARK(BM_BuildBatch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_SimulateLedger(benchmark::State& state) {
  WorkloadProfile profile;
  for (int i = 0; i < 1000; ++i) profile.push_back({std::to_string(i), 3000 + i});
  SimConfig cfg;
  cfg.max_concurrency = static_cast<std::size_t>(state.range(0));
  cfg.warm_fraction = 0.8;
  for (auto _ : state) benchmark::DoNotOptimize(simulate_ledger(profile, cfg));
}
BENCHMARK(BM_SimulateLedger)->Arg(0)->Arg(50);

void BM_StoreDataset(benchmark::State& state) {
  PlrDgpConfig cfg;
  cfg.n_obs = 5099;
  cfg.dim_x = 15;
  const auto ds = generate_plr(cfg);
  const auto root = std::filesystem::temp_directory_path() / "dmlsl-bench-store";
  ObjectStore store(root);
  for (auto _ : state) benchmark::DoNotOptimize(store_dataset(ds, store));
  std::filesystem::remove_all(root);
}
BENCHMARK(BM_StoreDataset)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
