#pragma once

// Stratified k-fold assignment and the train/validation/test split built from it.

#include "scgt/core.hpp"
#include "scgt/model.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <vector>

namespace scgt {

inline constexpr int kRegressionStrata = 5;

/// Stratum of every sample: class label for classification, quintile bin of
/// the target (by rank, ties broken by index) for regression.
inline std::vector<int> strata_of(std::span<const double> targets, Task task) {
  const std::size_t n = targets.size();
  std::vector<int> strata(n);
  if (task == Task::Classification) {
    for (std::size_t i = 0; i < n; ++i) strata[i] = static_cast<int>(targets[i]);
    return strata;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return targets[a] < targets[b]; });
  for (std::size_t r = 0; r < n; ++r) {
    strata[order[r]] = static_cast<int>(r * kRegressionStrata / n);
  }
  return strata;
}

/// Fold index per sample. Each stratum is shuffled with `seed` and dealt
/// round-robin with one counter running across strata, so fold sizes differ by
/// at most one (lower folds take the remainder) and every fold holds each
/// stratum within one sample of its share.
inline std::vector<int> stratified_folds(std::span<const double> targets, int n_folds, Task task,
                                         std::uint64_t seed) {
  require(n_folds >= 2, "need at least two folds");
  const std::vector<int> strata = strata_of(targets, task);
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < strata.size(); ++i) members[strata[i]].push_back(i);
  for (const auto& [key, idx] : members) {
    if (static_cast<int>(idx.size()) < n_folds) {
      std::ostringstream os;
      os << "stratum " << key << " has " << idx.size() << " samples, fewer than " << n_folds
         << " folds";
      throw ValidationError(os.str());
    }
  }
  std::mt19937_64 rng(seed);
  std::vector<int> fold(strata.size(), -1);
  std::size_t counter = 0;
  for (auto& [key, idx] : members) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i : idx) fold[i] = static_cast<int>(counter++ % static_cast<std::size_t>(n_folds));
  }
  return fold;
}

struct Split {
  std::vector<std::size_t> train, validation, test;
};

/// Fold k is the test set, fold k+1 (mod n) the validation set, the rest train.
/// With five folds this is the 60/20/20 shape.
inline Split fold_split(std::span<const int> folds, int n_folds, int k) {
  require(k >= 0 && k < n_folds, "fold index out of range");
  const int val_fold = (k + 1) % n_folds;
  Split s;
  for (std::size_t i = 0; i < folds.size(); ++i) {
    if (folds[i] == k) s.test.push_back(i);
    else if (folds[i] == val_fold) s.validation.push_back(i);
    else s.train.push_back(i);
  }
  return s;
}

struct SplitSizes {
  std::size_t train = 0, validation = 0, test = 0;
};

/// Sizes produced by fold_split on n samples for fold iteration k.
inline SplitSizes split_sizes(std::size_t n, int n_folds, int k = 0) {
  auto fold_size = [&](int f) {
    const auto nf = static_cast<std::size_t>(n_folds);
    return n / nf + (static_cast<std::size_t>(f) < n % nf ? 1 : 0);
  };
  SplitSizes s;
  s.test = fold_size(k);
  s.validation = fold_size((k + 1) % n_folds);
  s.train = n - s.test - s.validation;
  return s;
}

}  // namespace scgt
