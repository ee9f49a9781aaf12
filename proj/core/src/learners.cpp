#include "dmlsl/learners.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "dmlsl/error.hpp"
#include "dmlsl/numfmt.hpp"
#include "dmlsl/rng.hpp"

namespace dmlsl {

namespace {

[[noreturn]] void bad_param(std::string_view key, std::string_view reason) {
  throw DmlError(ErrorCode::kBadParam, fmt::format("{}: {}", key, reason));
}

const std::set<std::string, std::less<>>& keys_for(LearnerKind kind) {
  static const std::set<std::string, std::less<>> ridge{"lambda", "seed_salt"};
  static const std::set<std::string, std::less<>> tree{"max_depth", "min_leaf", "seed_salt"};
  static const std::set<std::string, std::less<>> forest{"max_depth", "max_features", "min_leaf", "n_estimators",
                                                         "seed_salt"};
  switch (kind) {
    case LearnerKind::kRidge: return ridge;
    case LearnerKind::kTree: return tree;
    case LearnerKind::kRandomForest: return forest;
  }
  return ridge;
}

int parse_positive_int(std::string_view key, std::string_view value) {
  const auto v = parse_int(value);
  if (!v || *v < 1 || *v > std::numeric_limits<int>::max()) bad_param(key, "expected an integer >= 1");
  return static_cast<int>(*v);
}

std::string render_depth(const std::optional<int>& depth) { return depth ? std::to_string(*depth) : "none"; }

std::string render_max_features(const MaxFeatures& mf) {
  switch (mf.mode) {
    case MaxFeatures::Mode::kAll: return "all";
    case MaxFeatures::Mode::kSqrt: return "sqrt";
    case MaxFeatures::Mode::kFraction: return format_double(mf.fraction);
  }
  return "all";
}

}  // namespace

std::string_view to_string(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::kRidge: return "ridge";
    case LearnerKind::kTree: return "tree";
    case LearnerKind::kRandomForest: return "random_forest";
  }
  return "unknown";
}

std::size_t MaxFeatures::resolve(std::size_t n_features) const {
  switch (mode) {
    case Mode::kAll: return n_features;
    case Mode::kSqrt:
      return std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(n_features))));
    case Mode::kFraction:
      return std::clamp<std::size_t>(static_cast<std::size_t>(fraction * static_cast<double>(n_features)), 1,
                                     n_features);
  }
  return n_features;
}

LearnerSpec LearnerSpec::ridge(double lambda) {
  LearnerSpec s;
  s.kind = LearnerKind::kRidge;
  s.lambda = lambda;
  return s;
}

LearnerSpec LearnerSpec::tree(std::optional<int> max_depth, int min_leaf) {
  LearnerSpec s;
  s.kind = LearnerKind::kTree;
  s.max_depth = max_depth;
  s.min_leaf = min_leaf;
  return s;
}

LearnerSpec LearnerSpec::random_forest(int n_estimators, MaxFeatures max_features, int min_leaf,
                                       std::optional<int> max_depth) {
  LearnerSpec s;
  s.kind = LearnerKind::kRandomForest;
  s.n_estimators = n_estimators;
  s.max_features = max_features;
  s.min_leaf = min_leaf;
  s.max_depth = max_depth;
  return s;
}

void validate(const LearnerSpec& spec) {
  switch (spec.kind) {
    case LearnerKind::kRidge:
      if (!std::isfinite(spec.lambda) || spec.lambda < 0.0) bad_param("lambda", "must be finite and >= 0");
      break;
    case LearnerKind::kRandomForest:
      if (spec.n_estimators < 1) bad_param("n_estimators", "must be >= 1");
      if (spec.max_features.mode == MaxFeatures::Mode::kFraction &&
          !(spec.max_features.fraction > 0.0 && spec.max_features.fraction <= 1.0)) {
        bad_param("max_features", "fraction must be in (0, 1]");
      }
      [[fallthrough]];
    case LearnerKind::kTree:
      if (spec.max_depth && *spec.max_depth < 1) bad_param("max_depth", "must be >= 1 or none");
      if (spec.min_leaf < 1) bad_param("min_leaf", "must be >= 1");
      break;
  }
}

LearnerSpec parse_learner_spec(std::string_view text) {
  text = trim(text);
  if (text.empty()) throw DmlError(ErrorCode::kUnknownLearner, "empty learner spec");

  std::string_view kind_text = text;
  std::string_view args;
  if (const auto open = text.find('('); open != std::string_view::npos) {
    if (text.back() != ')') throw DmlError(ErrorCode::kBadParam, fmt::format("missing ')' in '{}'", text));
    kind_text = trim(text.substr(0, open));
    args = trim(text.substr(open + 1, text.size() - open - 2));
  }

  LearnerSpec spec;
  if (kind_text == "ridge") {
    spec.kind = LearnerKind::kRidge;
  } else if (kind_text == "tree") {
    spec.kind = LearnerKind::kTree;
  } else if (kind_text == "random_forest") {
    spec.kind = LearnerKind::kRandomForest;
  } else {
    throw DmlError(ErrorCode::kUnknownLearner, fmt::format("unknown learner '{}'", kind_text));
  }

  const auto& allowed = keys_for(spec.kind);
  std::set<std::string, std::less<>> seen;
  std::size_t start = 0;
  while (!args.empty() && start <= args.size()) {
    std::size_t comma = args.find(',', start);
    if (comma == std::string_view::npos) comma = args.size();
    const std::string_view item = trim(args.substr(start, comma - start));
    start = comma + 1;

    const auto eq = item.find('=');
    if (eq == std::string_view::npos) bad_param(item, "expected key=value");
    const std::string_view key = trim(item.substr(0, eq));
    const std::string_view value = trim(item.substr(eq + 1));
    if (!allowed.contains(key)) bad_param(key, fmt::format("not a parameter of {}", to_string(spec.kind)));
    if (!seen.emplace(key).second) bad_param(key, "given twice");

    if (key == "lambda") {
      const auto v = parse_double(value);
      if (!v) bad_param(key, "expected a number");
      spec.lambda = *v;
    } else if (key == "max_depth") {
      spec.max_depth = value == "none" ? std::nullopt : std::optional<int>(parse_positive_int(key, value));
    } else if (key == "min_leaf") {
      spec.min_leaf = parse_positive_int(key, value);
    } else if (key == "n_estimators") {
      spec.n_estimators = parse_positive_int(key, value);
    } else if (key == "max_features") {
      if (value == "all") {
        spec.max_features = {};
      } else if (value == "sqrt") {
        spec.max_features = {MaxFeatures::Mode::kSqrt, 1.0};
      } else {
        const auto v = parse_double(value);
        if (!v) bad_param(key, "expected all, sqrt or a fraction");
        spec.max_features = {MaxFeatures::Mode::kFraction, *v};
      }
    } else if (key == "seed_salt") {
      std::uint64_t salt = 0;
      const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), salt);
      if (ec != std::errc() || ptr != value.data() + value.size()) bad_param(key, "expected an unsigned integer");
      spec.seed_salt = salt;
    }
  }
  validate(spec);
  return spec;
}

std::string render(const LearnerSpec& spec) {
  switch (spec.kind) {
    case LearnerKind::kRidge:
      return fmt::format("ridge(lambda={},seed_salt={})", format_double(spec.lambda), spec.seed_salt);
    case LearnerKind::kTree:
      return fmt::format("tree(max_depth={},min_leaf={},seed_salt={})", render_depth(spec.max_depth), spec.min_leaf,
                         spec.seed_salt);
    case LearnerKind::kRandomForest:
      return fmt::format("random_forest(max_depth={},max_features={},min_leaf={},n_estimators={},seed_salt={})",
                         render_depth(spec.max_depth), render_max_features(spec.max_features), spec.min_leaf,
                         spec.n_estimators, spec.seed_salt);
  }
  return {};
}

double split_midpoint(double lo, double hi) noexcept {
  const double mid = lo + (hi - lo) / 2.0;
  // Adjacent doubles can round the midpoint up to hi, which would move hi left.
  return mid < hi ? mid : lo;
}

double RegressionTree::predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  int idx = 0;
  while (!nodes[static_cast<std::size_t>(idx)].is_leaf()) {
    const auto& node = nodes[static_cast<std::size_t>(idx)];
    idx = x(node.feature) <= node.threshold ? node.left : node.right;
  }
  return nodes[static_cast<std::size_t>(idx)].value;
}

namespace {

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const TreeParams& params, std::uint64_t seed)
      : X_(X), y_(y), params_(params), rng_(seed), n_features_(static_cast<std::size_t>(X.cols())) {
    const auto n = static_cast<std::size_t>(X.rows());
    rows_.resize(n);
    if (params.bootstrap) {
      for (auto& r : rows_) r = static_cast<Eigen::Index>(rng_.bounded(n));
    } else {
      std::iota(rows_.begin(), rows_.end(), Eigen::Index{0});
    }
    mtry_ = params.max_features == 0 ? n_features_ : std::min(params.max_features, n_features_);
    all_features_.resize(n_features_);
    std::iota(all_features_.begin(), all_features_.end(), std::size_t{0});
  }

  RegressionTree build() {
    grow(0, rows_.size(), 0);
    return RegressionTree{std::move(nodes_)};
  }

 private:
  struct Candidate {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
  };

  struct Entry {
    double x;
    double yc;
    Eigen::Index row;
  };

  std::vector<std::size_t> draw_features() {
    if (mtry_ >= n_features_) return all_features_;
    std::vector<std::size_t> pool = all_features_;
    for (std::size_t i = 0; i < mtry_; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng_.bounded(n_features_ - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(mtry_);
    std::sort(pool.begin(), pool.end());
    return pool;
  }

  int grow(std::size_t begin, std::size_t end, int depth) {
    const std::size_t n = end - begin;
    const int idx = static_cast<int>(nodes_.size());
    nodes_.push_back(TreeNode{-1, 0.0, -1, -1, 0.0, n, depth});

    const double first = y_(rows_[begin]);
    bool pure = true;
    double sum = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const double v = y_(rows_[i]);
      pure = pure && v == first;
      sum += v;
    }
    if (pure) {
      nodes_[static_cast<std::size_t>(idx)].value = first;
      return idx;
    }
    const double mean = sum / static_cast<double>(n);
    nodes_[static_cast<std::size_t>(idx)].value = mean;

    const auto min_leaf = static_cast<std::size_t>(params_.min_leaf);
    if ((params_.max_depth && depth >= *params_.max_depth) || n < 2 * min_leaf) return idx;

    double node_sse = 0.0;
    double total = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const double c = y_(rows_[i]) - mean;
      node_sse += c * c;
      total += c;
    }
    const double eps = kSplitTieTolerance * node_sse;
    const double base = total * total / static_cast<double>(n);

    candidates_.clear();
    for (std::size_t f : draw_features()) {
      scratch_.clear();
      for (std::size_t i = begin; i < end; ++i) {
        const Eigen::Index r = rows_[i];
        scratch_.push_back({X_(r, static_cast<Eigen::Index>(f)), y_(r) - mean, r});
      }
      std::sort(scratch_.begin(), scratch_.end(),
                [](const Entry& a, const Entry& b) { return a.x < b.x || (a.x == b.x && a.row < b.row); });
      double left_sum = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        left_sum += scratch_[i].yc;
        if (scratch_[i].x == scratch_[i + 1].x) continue;
        const std::size_t n_left = i + 1;
        const std::size_t n_right = n - n_left;
        if (n_left < min_leaf || n_right < min_leaf) continue;
        const double right_sum = total - left_sum;
        const double gain = left_sum * left_sum / static_cast<double>(n_left) +
                            right_sum * right_sum / static_cast<double>(n_right) - base;
        candidates_.push_back({static_cast<int>(f), split_midpoint(scratch_[i].x, scratch_[i + 1].x), gain});
      }
    }
    // Candidates are in (feature, threshold) order; take the first within eps of the best gain.
    double max_gain = 0.0;
    for (const auto& c : candidates_) max_gain = std::max(max_gain, c.gain);
    if (!(max_gain > eps)) return idx;
    Candidate best;
    for (const auto& c : candidates_) {
      if (c.gain >= max_gain - eps) {
        best = c;
        break;
      }
    }

    const auto split_at = std::partition(rows_.begin() + static_cast<std::ptrdiff_t>(begin),
                                         rows_.begin() + static_cast<std::ptrdiff_t>(end), [&](Eigen::Index r) {
                                           return X_(r, best.feature) <= best.threshold;
                                         });
    const auto mid = static_cast<std::size_t>(split_at - rows_.begin());

    nodes_[static_cast<std::size_t>(idx)].feature = best.feature;
    nodes_[static_cast<std::size_t>(idx)].threshold = best.threshold;
    const int left = grow(begin, mid, depth + 1);
    const int right = grow(mid, end, depth + 1);
    nodes_[static_cast<std::size_t>(idx)].left = left;
    nodes_[static_cast<std::size_t>(idx)].right = right;
    return idx;
  }

  const Eigen::MatrixXd& X_;
  const Eigen::VectorXd& y_;
  TreeParams params_;
  Rng rng_;
  std::size_t n_features_;
  std::size_t mtry_ = 0;
  std::vector<std::size_t> all_features_;
  std::vector<Eigen::Index> rows_;
  std::vector<TreeNode> nodes_;
  std::vector<Entry> scratch_;
  std::vector<Candidate> candidates_;
};

RidgeState fit_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda) {
  const Eigen::RowVectorXd x_mean = X.colwise().mean();
  const double y_mean = y.mean();
  const Eigen::MatrixXd Xc = X.rowwise() - x_mean;
  const Eigen::VectorXd yc = y.array() - y_mean;

  Eigen::VectorXd coef;
  if (lambda > 0.0) {
    Eigen::MatrixXd gram = Xc.transpose() * Xc;
    gram.diagonal().array() += lambda;
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) throw DmlError(ErrorCode::kSingularSystem, "ridge system is not positive definite");
    coef = llt.solve(Xc.transpose() * yc);
  } else {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xc);
    if (qr.rank() < Xc.cols()) {
      throw DmlError(ErrorCode::kSingularSystem,
                     fmt::format("design has rank {} < {} and lambda is 0", qr.rank(), Xc.cols()));
    }
    coef = qr.solve(yc);
  }
  return RidgeState{coef, y_mean - x_mean.dot(coef)};
}

}  // namespace

RegressionTree fit_tree(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const TreeParams& params,
                        std::uint64_t seed) {
  return TreeBuilder(X, y, params, seed).build();
}

FittedModel fit(const LearnerSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::uint64_t seed) {
  validate(spec);
  if (X.rows() != y.size()) {
    throw DmlError(ErrorCode::kLengthMismatch, fmt::format("X has {} rows but y has {}", X.rows(), y.size()));
  }
  if (X.cols() < 1) throw DmlError(ErrorCode::kInvalidArgument, "feature matrix has no columns");
  if (X.rows() < 1) throw DmlError(ErrorCode::kDegenerateInput, "no training rows");
  if (!X.allFinite() || !y.allFinite()) throw DmlError(ErrorCode::kInvalidArgument, "non-finite training data");
  const auto q = static_cast<std::size_t>(X.cols());

  switch (spec.kind) {
    case LearnerKind::kRidge:
      return FittedModel(spec, q, fit_ridge(X, y, spec.lambda));
    case LearnerKind::kTree:
    case LearnerKind::kRandomForest:
      if (X.rows() < spec.min_leaf) {
        throw DmlError(ErrorCode::kDegenerateInput,
                       fmt::format("{} training rows < min_leaf {}", X.rows(), spec.min_leaf));
      }
      break;
  }

  TreeParams params{spec.max_depth, spec.min_leaf, 0, false};
  if (spec.kind == LearnerKind::kTree) return FittedModel(spec, q, fit_tree(X, y, params, 0));

  params.bootstrap = true;
  params.max_features = spec.max_features.resolve(q);
  const std::uint64_t base = seed ^ spec.seed_salt;
  ForestState forest;
  forest.trees.reserve(static_cast<std::size_t>(spec.n_estimators));
  for (int t = 0; t < spec.n_estimators; ++t) {
    forest.trees.push_back(fit_tree(X, y, params, derive_seed(base, {static_cast<std::uint64_t>(t)})));
  }
  return FittedModel(spec, q, std::move(forest));
}

Eigen::VectorXd predict(const FittedModel& model, const Eigen::MatrixXd& X) {
  if (static_cast<std::size_t>(X.cols()) != model.n_features()) {
    throw DmlError(ErrorCode::kWidthMismatch,
                   fmt::format("model expects {} features, got {}", model.n_features(), X.cols()));
  }
  const Eigen::Index m = X.rows();
  Eigen::VectorXd out(m);

  if (const auto* ridge = std::get_if<RidgeState>(&model.state())) {
    out = (X * ridge->coef).array() + ridge->intercept;
  } else if (const auto* tree = std::get_if<RegressionTree>(&model.state())) {
    for (Eigen::Index i = 0; i < m; ++i) out(i) = tree->predict_row(X.row(i));
  } else {
    const auto& trees = std::get<ForestState>(model.state()).trees;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double first = trees.front().predict_row(X.row(i));
      double sum = first;
      bool same = true;
      for (std::size_t t = 1; t < trees.size(); ++t) {
        const double p = trees[t].predict_row(X.row(i));
        same = same && p == first;
        sum += p;
      }
      out(i) = same ? first : sum / static_cast<double>(trees.size());
    }
  }
  return out;
}

}  // namespace dmlsl
