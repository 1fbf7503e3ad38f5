// Tree ensembles: bagged random forests and residual-fitting gradient boosting.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pcm/core.hpp"
#include "pcm/parallel.hpp"
#include "pcm/tree.hpp"

namespace pcm::learners {

struct ForestParams {
  int trees = 300;
  int max_depth = 7;
  int min_leaf = 4;
  double feature_ratio = 1.0 / 3.0;  // features drawn per split
  bool bootstrap = true;
};

struct Forest {
  std::vector<RegressionTree> trees;

  double predict(std::span<const double> x) const {
    double sum = 0.0;
    for (const auto& t : trees) sum += t.predict(x);
    return sum / static_cast<double>(trees.size());
  }

  bool operator==(const Forest&) const = default;
};

/// Each tree sees a bootstrap resample of size m (or every row once when
/// bootstrap is off) and draws a fresh feature subset at every split. Tree k
/// uses the sub-seed derive_seed(seed, k), so the forest does not depend on
/// the thread count.
inline Forest fit_random_forest(const FeatureMatrix& X, std::span<const double> y, const ForestParams& params,
                                std::uint64_t seed, unsigned threads = 1) {
  if (X.rows() != y.size()) throw ContractError("feature matrix and target differ in length");
  if (y.empty()) throw ContractError("random forest needs at least one row");
  if (params.trees < 1) throw ContractError("random forest needs at least one tree");
  const SortedColumns sorted(X);
  const auto features = all_features();
  const TreeParams tree_params{params.max_depth, static_cast<double>(params.min_leaf), params.feature_ratio};
  const std::size_t m = y.size();
  Forest forest;
  forest.trees.resize(static_cast<std::size_t>(params.trees));
  parallel_for(forest.trees.size(), threads, [&](std::size_t k) {
    Rng rng(derive_seed(seed, k));
    std::vector<std::uint32_t> counts;
    if (params.bootstrap) {
      counts.assign(m, 0);
      for (std::size_t i = 0; i < m; ++i) ++counts[uniform_index(rng, m)];
    }
    forest.trees[k] = grow_tree(sorted, y, counts, features, tree_params, rng);
  });
  return forest;
}

struct BoostingParams {
  int trees = 300;
  int max_depth = 5;
  double learning_rate = 0.1;
  double col_subsample = 0.8;  // features drawn once per tree
  int min_leaf = 1;
};

struct Boosted {
  double base_score = 0.0;
  double learning_rate = 0.1;
  std::vector<RegressionTree> trees;

  double predict(std::span<const double> x) const {
    double f = base_score;
    for (const auto& t : trees) f += learning_rate * t.predict(x);
    return f;
  }

  bool operator==(const Boosted&) const = default;
};

struct BoostingFit {
  Boosted model;
  std::vector<double> stage_mse;  // training MSE after each stage; index 0 is the base score
  std::vector<double> fitted;
};

/// Stage k fits a regression tree to the residuals y - F_{k-1} and adds
/// learning_rate times its output; F_0 is the mean of y.
inline BoostingFit fit_gbrt(const FeatureMatrix& X, std::span<const double> y, const BoostingParams& params,
                            std::uint64_t seed) {
  if (X.rows() != y.size()) throw ContractError("feature matrix and target differ in length");
  if (y.empty()) throw ContractError("gradient boosting needs at least one row");
  if (params.trees < 0) throw ContractError("tree count must be non-negative");
  if (!(params.col_subsample > 0.0 && params.col_subsample <= 1.0))
    throw ContractError("col_subsample must lie in (0, 1]");
  const std::size_t m = y.size();
  const SortedColumns sorted(X);
  const TreeParams tree_params{params.max_depth, static_cast<double>(params.min_leaf), 1.0};
  const auto n_cols = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(params.col_subsample * static_cast<double>(kNumFeatures))), 1,
      kNumFeatures);

  BoostingFit fit;
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(m);
  fit.model.base_score = mean;
  fit.model.learning_rate = params.learning_rate;
  fit.fitted.assign(m, mean);
  fit.stage_mse.push_back(mean_squared_residual(y, fit.fitted));

  std::vector<double> residual(m);
  for (int k = 0; k < params.trees; ++k) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    std::vector<std::size_t> features;
    if (n_cols == kNumFeatures) {
      features = all_features();
    } else {
      features = sample_without_replacement(kNumFeatures, n_cols, rng);
      std::sort(features.begin(), features.end());
    }
    for (std::size_t i = 0; i < m; ++i) residual[i] = y[i] - fit.fitted[i];
    RegressionTree tree = grow_tree(sorted, residual, {}, features, tree_params, rng);
    for (std::size_t i = 0; i < m; ++i) fit.fitted[i] += params.learning_rate * tree.predict(X.row(i));
    fit.model.trees.push_back(std::move(tree));
    fit.stage_mse.push_back(mean_squared_residual(y, fit.fitted));
  }
  return fit;
}

}  // namespace pcm::learners
