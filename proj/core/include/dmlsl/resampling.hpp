#pragma once

#include <cstdint>
#include <vector>

namespace dmlsl {

using IndexSet = std::vector<std::size_t>;

// M independent K-fold partitions of {0, ..., N-1}.
//
// Repetition m shuffles 0..N-1 with Fisher-Yates driven by
// Rng(derive_seed(seed, {m})) (i from N-1 down to 1, swap i with bounded(i+1)),
// then cuts the permutation into K contiguous blocks; the first N mod K blocks
// get one extra index. Each fold is stored sorted ascending.
class FoldPlan {
 public:
  FoldPlan(std::size_t n_obs, std::size_t n_folds, std::size_t n_rep, std::uint64_t seed,
           std::vector<std::vector<IndexSet>> folds);

  std::size_t n_obs() const noexcept { return n_obs_; }
  std::size_t n_folds() const noexcept { return n_folds_; }
  std::size_t n_rep() const noexcept { return n_rep_; }
  std::uint64_t seed() const noexcept { return seed_; }

  const IndexSet& fold(std::size_t rep, std::size_t k) const { return folds_.at(rep).at(k); }
  const std::vector<IndexSet>& repetition(std::size_t rep) const { return folds_.at(rep); }
  // All indices outside fold k of repetition rep, ascending.
  IndexSet complement(std::size_t rep, std::size_t k) const;

  bool operator==(const FoldPlan&) const = default;

 private:
  std::size_t n_obs_;
  std::size_t n_folds_;
  std::size_t n_rep_;
  std::uint64_t seed_;
  std::vector<std::vector<IndexSet>> folds_;
};

// Throws TooManyFolds when n_folds > n_obs, InvalidArgument when n_folds < 2 or n_rep < 1.
FoldPlan draw_folds(std::size_t n_obs, std::size_t n_folds, std::size_t n_rep, std::uint64_t seed);

}  // namespace dmlsl
