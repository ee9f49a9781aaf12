#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dmlsl/dataset.hpp"
#include "dmlsl/error.hpp"
#include "dmlsl/learners.hpp"
#include "dmlsl/resampling.hpp"

namespace dmlsl::testing {

// Code of the DmlError thrown by f; nullopt when f returns normally.
std::optional<ErrorCode> error_code_of(const std::function<void()>& f);

// Unique scratch directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

struct BruteSplit {
  int feature = -1;
  double threshold = 0.0;
  double child_sse = 0.0;
};

// Enumerates every (feature, midpoint) pair over `rows`, computing child SSE
// directly from two-pass means. Returns the first candidate in
// (feature, threshold) order whose SSE is within tol * node_sse of the minimum,
// or nullopt when no candidate reduces SSE by more than tol * node_sse.
std::optional<BruteSplit> brute_force_split(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                            const std::vector<Eigen::Index>& rows, std::size_t min_leaf, double tol);

// Walks a tree grown on all rows with every feature, replaying the training
// rows through it, and checks each node against brute_force_split. Returns an
// empty string on agreement, else a description of the first mismatch.
std::string check_tree(const RegressionTree& tree, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const TreeParams& params);

// Cross-fitted PLR written directly against learners and fold plans, without
// payloads, backends or the score helpers. Fit seed of (rep, fold, nuisance)
// is derive_seed(master, {rep, fold, nuisance}) with g = 0, m = 1.
struct ReferenceFit {
  std::vector<double> theta_per_rep;
  std::vector<double> var_per_rep;
};
ReferenceFit reference_plr(const DmlDataset& ds, const FoldPlan& plan, const LearnerSpec& learner_g,
                           const LearnerSpec& learner_m, std::uint64_t master_seed);

// Column names of the reemployment bonus data used by the preset.
const std::vector<std::string>& bonus_controls();

// Synthetic table with the bonus column layout (binary controls, log-duration outcome).
std::string synthetic_bonus_csv(std::size_t n_obs, std::uint64_t seed);

}  // namespace dmlsl::testing
