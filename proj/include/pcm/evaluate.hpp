// Metrics, cross-validated grid search, the data-size sensitivity study and
// the per-dataset benchmark table.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "pcm/core.hpp"
#include "pcm/learners.hpp"
#include "pcm/parallel.hpp"
#include "pcm/stacking.hpp"

namespace pcm::evaluate {

using learners::RegressorConfig;
using learners::Variant;

inline double mse(std::span<const double> y, std::span<const double> yhat) { return mean_squared_residual(y, yhat); }

/// Mean of |(y - yhat) / y|, as a fraction.
inline double mape(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw ContractError("length mismatch between y and yhat");
  if (y.empty()) throw ContractError("empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0) throw DataError("MAPE undefined: target value is zero at index " + std::to_string(i));
    sum += std::abs((y[i] - yhat[i]) / y[i]);
  }
  return sum / static_cast<double>(y.size());
}

/// 1 - SS_res / SS_tot.
inline double r2(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw ContractError("length mismatch between y and yhat");
  if (y.empty()) throw ContractError("empty input");
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss_res += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  if (ss_tot == 0.0) throw NumericError("R^2 undefined for a constant target");
  return 1.0 - ss_res / ss_tot;
}

enum class SplitKind { training, testing };

inline std::string_view to_string(SplitKind s) { return s == SplitKind::training ? "training" : "testing"; }

struct EvalReport {
  double mse = 0.0;
  double mape = 0.0;
  double r2 = 0.0;
  SplitKind split = SplitKind::testing;
  std::string model;
  std::string dataset;
};

inline EvalReport make_report(std::span<const double> y, std::span<const double> yhat, SplitKind split,
                              std::string model, std::string dataset) {
  return {mse(y, yhat), mape(y, yhat), r2(y, yhat), split, std::move(model), std::move(dataset)};
}

// ---------------------------------------------------------------------------
// Grid search.

/// Lexicographic complexity key: fewer trees, shallower, larger leaves, fewer
/// neurons rank as simpler.
inline std::vector<double> complexity_key(const RegressorConfig& c) {
  return std::visit(
      [](const auto& p) -> std::vector<double> {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, learners::ElasticNetParams>) {
          return {-p.alpha, p.beta};
        } else if constexpr (std::is_same_v<T, learners::ForestParams>) {
          return {static_cast<double>(p.trees), static_cast<double>(p.max_depth), -static_cast<double>(p.min_leaf)};
        } else if constexpr (std::is_same_v<T, learners::BoostingParams>) {
          return {static_cast<double>(p.trees), static_cast<double>(p.max_depth), p.col_subsample, p.learning_rate};
        } else {
          return {static_cast<double>(p.neurons), static_cast<double>(p.hidden_layers), -static_cast<double>(p.batch)};
        }
      },
      c.params);
}

/// Cartesian grid over hyperparameter values for one variant. Empty lists
/// keep the variant default.
struct GridSpec {
  Variant variant = Variant::RF;
  std::vector<double> alpha, beta;                            // EN
  std::vector<int> trees, max_depth, min_leaf;                // RF / GBRT
  std::vector<double> learning_rate, col_subsample;           // GBRT
  std::vector<int> hidden_layers, neurons, batch;             // MLP

  /// Grids covering the tuning domains.
  static GridSpec full(Variant v) {
    GridSpec g;
    g.variant = v;
    switch (v) {
      case Variant::EN:
        g.alpha = {0.0, 0.25, 0.5, 0.75, 1.0};
        g.beta = {1e-3, 1e-2, 1e-1};
        break;
      case Variant::RF:
        g.trees = {100, 300, 500, 1000};
        g.max_depth = {2, 3, 4, 5, 6, 7};
        g.min_leaf = {1, 2, 4, 8, 16, 32, 64};
        break;
      case Variant::GBRT:
        g.trees = {100, 300, 500, 1000};
        g.max_depth = {2, 3, 4, 5, 6, 7};
        g.learning_rate = {0.1, 0.3, 0.5};
        g.col_subsample = {0.5, 0.8, 1.0};
        break;
      case Variant::MLP:
        g.hidden_layers = {1, 2, 3};
        g.neurons = {2, 8, 32, 128, 256};
        g.batch = {32, 64, 128};
        break;
    }
    return g;
  }

  std::vector<RegressorConfig> cells(std::uint64_t seed) const {
    std::vector<RegressorConfig> out{learners::default_config(variant, seed)};
    auto expand = [&out](auto values, auto setter) {
      if (values.empty()) return;
      std::vector<RegressorConfig> next;
      for (const auto& c : out)
        for (auto v : values) {
          RegressorConfig d = c;
          setter(d, v);
          next.push_back(d);
        }
      out = std::move(next);
    };
    using namespace learners;
    switch (variant) {
      case Variant::EN:
        expand(alpha, [](RegressorConfig& c, double v) { std::get<ElasticNetParams>(c.params).alpha = v; });
        expand(beta, [](RegressorConfig& c, double v) { std::get<ElasticNetParams>(c.params).beta = v; });
        break;
      case Variant::RF:
        expand(trees, [](RegressorConfig& c, int v) { std::get<ForestParams>(c.params).trees = v; });
        expand(max_depth, [](RegressorConfig& c, int v) { std::get<ForestParams>(c.params).max_depth = v; });
        expand(min_leaf, [](RegressorConfig& c, int v) { std::get<ForestParams>(c.params).min_leaf = v; });
        break;
      case Variant::GBRT:
        expand(trees, [](RegressorConfig& c, int v) { std::get<BoostingParams>(c.params).trees = v; });
        expand(max_depth, [](RegressorConfig& c, int v) { std::get<BoostingParams>(c.params).max_depth = v; });
        expand(learning_rate,
               [](RegressorConfig& c, double v) { std::get<BoostingParams>(c.params).learning_rate = v; });
        expand(col_subsample,
               [](RegressorConfig& c, double v) { std::get<BoostingParams>(c.params).col_subsample = v; });
        break;
      case Variant::MLP:
        expand(hidden_layers, [](RegressorConfig& c, int v) { std::get<MlpParams>(c.params).hidden_layers = v; });
        expand(neurons, [](RegressorConfig& c, int v) { std::get<MlpParams>(c.params).neurons = v; });
        expand(batch, [](RegressorConfig& c, int v) { std::get<MlpParams>(c.params).batch = v; });
        break;
    }
    return out;
  }
};

struct GridCell {
  RegressorConfig config;
  double cv_mse = 0.0;
  std::vector<double> fold_mse;
};

struct GridSearchResult {
  std::vector<GridCell> cells;
  std::size_t best = 0;
  int folds = 5;

  const GridCell& best_cell() const { return cells[best]; }
};

/// Scores each cell by K-fold cross-validated MSE. Every cell sees the same
/// fold partition. Scores within 1e-12 relative count as ties and go to the
/// simpler cell.
inline GridSearchResult grid_search(std::span<const RegressorConfig> grid, const FeatureMatrix& X,
                                    std::span<const double> y, int folds, std::uint64_t seed, unsigned threads = 1) {
  if (grid.empty()) throw ContractError("grid search needs at least one cell");
  for (const auto& c : grid) c.validate();
  const auto fold_of = stacking::assign_folds(y.size(), folds, seed);
  std::vector<std::vector<std::size_t>> train(static_cast<std::size_t>(folds)), held(static_cast<std::size_t>(folds));
  for (std::size_t i = 0; i < y.size(); ++i)
    for (int k = 0; k < folds; ++k) (k == fold_of[i] ? held : train)[static_cast<std::size_t>(k)].push_back(i);

  GridSearchResult result;
  result.folds = folds;
  result.cells.resize(grid.size());
  parallel_for(grid.size(), threads, [&](std::size_t c) {
    GridCell cell{grid[c], 0.0, {}};
    for (int k = 0; k < folds; ++k) {
      const auto& tr = train[static_cast<std::size_t>(k)];
      const auto& te = held[static_cast<std::size_t>(k)];
      std::vector<double> yt(tr.size()), ye(te.size());
      for (std::size_t i = 0; i < tr.size(); ++i) yt[i] = y[tr[i]];
      for (std::size_t i = 0; i < te.size(); ++i) ye[i] = y[te[i]];
      const auto model = learners::fit_regressor(grid[c], X.select_rows(tr), yt);
      const auto pred = model.predict(X.select_rows(te));
      cell.fold_mse.push_back(mse(ye, pred));
    }
    double sum = 0.0;
    for (double v : cell.fold_mse) sum += v;
    cell.cv_mse = sum / static_cast<double>(folds);
    result.cells[c] = std::move(cell);
  });
  for (std::size_t c = 1; c < result.cells.size(); ++c) {
    const double a = result.cells[c].cv_mse, b = result.cells[result.best].cv_mse;
    const bool tie = std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b));
    if (tie ? complexity_key(result.cells[c].config) < complexity_key(result.cells[result.best].config) : a < b)
      result.best = c;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Data-size sensitivity study.

struct SensitivityOptions {
  int min_size = 100;
  int max_size = 4500;
  int step = 100;
  int repetitions = 50;
  double train_fraction = 0.7;
  std::vector<RegressorConfig> variants;  // empty: empirical EN, RF, GBRT
};

/// Fixed settings used where no tuning happens.
inline std::vector<RegressorConfig> empirical_configs(std::uint64_t seed) {
  using namespace learners;
  return {RegressorConfig{ElasticNetParams{0.1, 0.01}, seed},
          RegressorConfig{ForestParams{300, 7, 4, 1.0 / 3.0, true}, seed},
          RegressorConfig{BoostingParams{300, 5, 0.1, 0.8, 1}, seed}};
}

struct SensitivityCurve {
  std::vector<int> sizes;
  std::vector<std::string> variants;
  /// r2[v][s][rep]
  std::vector<std::vector<std::vector<double>>> r2;
  std::vector<std::vector<double>> mean, stddev;  // population standard deviation
  std::size_t fits = 0;
};

inline SensitivityCurve sensitivity_study(const Dataset& data, std::uint64_t seed, const SensitivityOptions& opt = {},
                                          unsigned threads = 1) {
  if (opt.step <= 0 || opt.min_size < 2 || opt.max_size < opt.min_size || opt.repetitions < 1)
    throw ContractError("invalid sensitivity study sizes");
  if (data.size() < static_cast<std::size_t>(opt.max_size))
    throw DataError("sensitivity study needs at least " + std::to_string(opt.max_size) + " samples, dataset has " +
                    std::to_string(data.size()));
  const auto configs = opt.variants.empty() ? empirical_configs(seed) : opt.variants;
  for (const auto& c : configs) c.validate();

  SensitivityCurve curve;
  for (int n = opt.min_size; n <= opt.max_size; n += opt.step) curve.sizes.push_back(n);
  for (const auto& c : configs) curve.variants.emplace_back(learners::to_string(c.variant()));
  const std::size_t S = curve.sizes.size(), R = static_cast<std::size_t>(opt.repetitions), V = configs.size();
  curve.r2.assign(V, std::vector<std::vector<double>>(S, std::vector<double>(R, 0.0)));

  parallel_for(S * R, threads, [&](std::size_t unit) {
    const std::size_t s = unit / R, rep = unit % R;
    const auto n = static_cast<std::size_t>(curve.sizes[s]);
    const std::uint64_t unit_seed = derive_seed(seed, n, rep);
    Rng rng(unit_seed);
    const auto drawn = sample_without_replacement(data.size(), n, rng);
    const Dataset sample = data.subset(drawn);
    const auto parts = split(sample, SplitSpec{opt.train_fraction, derive_seed(unit_seed, 1), SplitMode::by_sample});
    for (std::size_t v = 0; v < V; ++v) {
      RegressorConfig c = configs[v];
      c.seed = derive_seed(unit_seed, 2 + v);
      const auto model = learners::fit_regressor(c, parts.train.X, parts.train.y);
      curve.r2[v][s][rep] = r2(parts.test.y, model.predict(parts.test.X));
    }
  });

  curve.mean.assign(V, std::vector<double>(S, 0.0));
  curve.stddev.assign(V, std::vector<double>(S, 0.0));
  for (std::size_t v = 0; v < V; ++v)
    for (std::size_t s = 0; s < S; ++s) {
      const auto& vals = curve.r2[v][s];
      double mu = 0.0;
      for (double x : vals) mu += x;
      mu /= static_cast<double>(R);
      double ss = 0.0;
      for (double x : vals) ss += (x - mu) * (x - mu);
      curve.mean[v][s] = mu;
      curve.stddev[v][s] = std::sqrt(ss / static_cast<double>(R));
    }
  curve.fits = S * R * V;
  return curve;
}

// ---------------------------------------------------------------------------
// Benchmark table.

struct NamedDataset {
  std::string name;
  Dataset data;
};

/// Per-aircraft sets of `n` random samples each, plus a combined set of `n`
/// samples with an equal share from every aircraft.
inline std::vector<NamedDataset> benchmark_datasets(std::span<const NamedDataset> per_aircraft, std::size_t n,
                                                    std::uint64_t seed) {
  if (per_aircraft.empty()) throw ContractError("benchmark needs at least one dataset");
  std::vector<NamedDataset> out;
  std::vector<Dataset> shares;
  const std::size_t share = n / per_aircraft.size();
  for (std::size_t k = 0; k < per_aircraft.size(); ++k) {
    const auto& src = per_aircraft[k];
    if (src.data.size() < n)
      throw DataError("dataset '" + src.name + "' has fewer than " + std::to_string(n) + " samples");
    Rng rng(derive_seed(seed, 0xbe, k));
    const auto idx = sample_without_replacement(src.data.size(), n, rng);
    out.push_back({src.name, src.data.subset(idx)});
    std::vector<std::size_t> first(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(share));
    shares.push_back(src.data.subset(first));
  }
  if (per_aircraft.size() > 1) out.push_back({"combined", concat(shares)});
  return out;
}

/// A fitted model of any kind, reduced to what the evaluation needs.
using Predictor = std::function<TargetVector(const FeatureMatrix&)>;

struct BenchmarkModel {
  std::string name;
  /// Fits on the training split and returns a predictor.
  std::function<Predictor(const Dataset& train)> fit;
};

inline BenchmarkModel benchmark_model(const RegressorConfig& config) {
  return {std::string(learners::to_string(config.variant())), [config](const Dataset& train) -> Predictor {
            auto model = std::make_shared<learners::TrainedRegressor>(
                learners::fit_regressor(config, train.X, train.y));
            return [model](const FeatureMatrix& X) { return model->predict(X); };
          }};
}

inline BenchmarkModel benchmark_stacked(std::vector<RegressorConfig> bases, int K, std::uint64_t seed) {
  return {"stacked", [bases = std::move(bases), K, seed](const Dataset& train) -> Predictor {
            auto model = std::make_shared<stacking::StackedModel>(
                stacking::fit_stacked(train.X, train.y, bases, K, seed));
            return [model](const FeatureMatrix& X) { return model->predict(X); };
          }};
}

/// One report per (model, dataset, split) from a 70/30 by-sample split.
inline std::vector<EvalReport> benchmark_table(std::span<const BenchmarkModel> models,
                                               std::span<const NamedDataset> datasets, std::uint64_t seed,
                                               double train_fraction = 0.7, unsigned threads = 1) {
  std::vector<EvalReport> out(models.size() * datasets.size() * 2);
  parallel_for(models.size() * datasets.size(), threads, [&](std::size_t unit) {
    const std::size_t d = unit / models.size(), k = unit % models.size();
    const auto parts = split(datasets[d].data, SplitSpec{train_fraction, derive_seed(seed, d), SplitMode::by_sample});
    const auto predictor = models[k].fit(parts.train);
    out[unit * 2] = make_report(parts.train.y, predictor(parts.train.X), SplitKind::training, models[k].name,
                                datasets[d].name);
    out[unit * 2 + 1] =
        make_report(parts.test.y, predictor(parts.test.X), SplitKind::testing, models[k].name, datasets[d].name);
  });
  return out;
}

}  // namespace pcm::evaluate
