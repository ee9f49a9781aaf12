#include "dmlsl/resampling.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>

#include "dmlsl/error.hpp"
#include "dmlsl/rng.hpp"

namespace dmlsl {

FoldPlan::FoldPlan(std::size_t n_obs, std::size_t n_folds, std::size_t n_rep, std::uint64_t seed,
                   std::vector<std::vector<IndexSet>> folds)
    : n_obs_(n_obs), n_folds_(n_folds), n_rep_(n_rep), seed_(seed), folds_(std::move(folds)) {}

IndexSet FoldPlan::complement(std::size_t rep, std::size_t k) const {
  const IndexSet& test = fold(rep, k);
  IndexSet out;
  out.reserve(n_obs_ - test.size());
  std::size_t t = 0;
  for (std::size_t i = 0; i < n_obs_; ++i) {
    if (t < test.size() && test[t] == i) {
      ++t;
    } else {
      out.push_back(i);
    }
  }
  return out;
}

FoldPlan draw_folds(std::size_t n_obs, std::size_t n_folds, std::size_t n_rep, std::uint64_t seed) {
  if (n_folds < 2) throw DmlError(ErrorCode::kInvalidArgument, fmt::format("n_folds must be >= 2, got {}", n_folds));
  if (n_rep < 1) throw DmlError(ErrorCode::kInvalidArgument, "n_rep must be >= 1");
  if (n_folds > n_obs) {
    throw DmlError(ErrorCode::kTooManyFolds, fmt::format("{} folds requested for {} observations", n_folds, n_obs));
  }

  const std::size_t base = n_obs / n_folds;
  const std::size_t extra = n_obs % n_folds;
  std::vector<std::vector<IndexSet>> folds(n_rep);
  std::vector<std::size_t> perm(n_obs);
  for (std::size_t m = 0; m < n_rep; ++m) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(m)}));
    for (std::size_t i = n_obs - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(rng.bounded(i + 1));
      std::swap(perm[i], perm[j]);
    }
    auto& rep = folds[m];
    rep.resize(n_folds);
    std::size_t pos = 0;
    for (std::size_t k = 0; k < n_folds; ++k) {
      const std::size_t size = base + (k < extra ? 1 : 0);
      rep[k].assign(perm.begin() + static_cast<std::ptrdiff_t>(pos),
                    perm.begin() + static_cast<std::ptrdiff_t>(pos + size));
      std::sort(rep[k].begin(), rep[k].end());
      pos += size;
    }
  }
  return FoldPlan(n_obs, n_folds, n_rep, seed, std::move(folds));
}

}  // namespace dmlsl
