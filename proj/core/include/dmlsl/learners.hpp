#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace dmlsl {

enum class LearnerKind { kRidge, kTree, kRandomForest };

std::string_view to_string(LearnerKind kind);

// Number of candidate features drawn per split.
struct MaxFeatures {
  enum class Mode { kAll, kSqrt, kFraction };
  Mode mode = Mode::kAll;
  double fraction = 1.0;  // used when mode == kFraction, in (0, 1]

  std::size_t resolve(std::size_t n_features) const;
  bool operator==(const MaxFeatures&) const = default;
};

// Learner description that travels inside task payloads as text.
//
// Grammar: kind(key=value, ...). Keys per kind:
//   ridge          lambda (>= 0, default 1), seed_salt
//   tree           max_depth (>= 1 or none), min_leaf (>= 1), seed_salt
//   random_forest  max_depth, max_features (all | sqrt | fraction in (0,1]),
//                  min_leaf, n_estimators (>= 1, default 100), seed_salt
// Canonical rendering lists every key of the kind in alphabetical order with
// floats in shortest round-trip form.
struct LearnerSpec {
  LearnerKind kind = LearnerKind::kRidge;
  double lambda = 1.0;
  std::optional<int> max_depth;  // nullopt = unlimited
  int min_leaf = 1;
  int n_estimators = 100;
  MaxFeatures max_features;
  std::uint64_t seed_salt = 0;

  static LearnerSpec ridge(double lambda);
  static LearnerSpec tree(std::optional<int> max_depth = std::nullopt, int min_leaf = 1);
  static LearnerSpec random_forest(int n_estimators, MaxFeatures max_features = {}, int min_leaf = 1,
                                   std::optional<int> max_depth = std::nullopt);

  bool operator==(const LearnerSpec&) const = default;
};

// Throws BadParam.
void validate(const LearnerSpec& spec);
// Throws UnknownLearner, BadParam.
LearnerSpec parse_learner_spec(std::string_view text);
std::string render(const LearnerSpec& spec);

struct RidgeState {
  Eigen::VectorXd coef;
  double intercept = 0.0;
};

// Flat binary tree. Leaves have feature == -1. Rows with x[feature] <= threshold go left.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
  std::size_t n_samples = 0;
  int depth = 0;

  bool is_leaf() const noexcept { return feature < 0; }
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

struct ForestState {
  std::vector<RegressionTree> trees;
};

class FittedModel {
 public:
  using State = std::variant<RidgeState, RegressionTree, ForestState>;

  FittedModel(LearnerSpec spec, std::size_t n_features, State state)
      : spec_(std::move(spec)), n_features_(n_features), state_(std::move(state)) {}

  const LearnerSpec& spec() const noexcept { return spec_; }
  std::size_t n_features() const noexcept { return n_features_; }
  const State& state() const noexcept { return state_; }

 private:
  LearnerSpec spec_;
  std::size_t n_features_;
  State state_;
};

// Deterministic in (spec, X, y, seed ^ spec.seed_salt). Forest tree i draws its
// bootstrap rows and per-split feature subsets from
// Rng(derive_seed(seed ^ seed_salt, {i})).
// Throws DegenerateInput, SingularSystem, LengthMismatch, InvalidArgument.
FittedModel fit(const LearnerSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::uint64_t seed);

// Throws WidthMismatch.
Eigen::VectorXd predict(const FittedModel& model, const Eigen::MatrixXd& X);

// Tree growth parameters, exposed for split-level verification in tests.
struct TreeParams {
  std::optional<int> max_depth;
  int min_leaf = 1;
  std::size_t max_features = 0;  // 0 or >= q means all features
  bool bootstrap = false;
};

RegressionTree fit_tree(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const TreeParams& params,
                        std::uint64_t seed);

// Split selection: among all candidates whose child SSE is within this
// fraction of the parent node SSE of the smallest child SSE, the first in
// (feature, threshold) order wins. A node is split only when the best SSE
// reduction exceeds the same fraction of its SSE.
inline constexpr double kSplitTieTolerance = 1e-10;

// Threshold placed between consecutive distinct sorted values lo < hi.
double split_midpoint(double lo, double hi) noexcept;

}  // namespace dmlsl
