// Two-layer stacked ensemble: K-fold out-of-fold base predictions feed an
// ordinary-least-squares meta-model with intercept.
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "pcm/core.hpp"
#include "pcm/learners.hpp"
#include "pcm/parallel.hpp"

namespace pcm::stacking {

using learners::RegressorConfig;
using learners::TrainedRegressor;
using json = nlohmann::json;

inline constexpr std::string_view kStackedFormat = "pcm-stacked/1";

/// Seed-deterministic fold label per row; fold sizes differ by at most one.
inline std::vector<int> assign_folds(std::size_t m, int K, std::uint64_t seed) {
  if (K < 2) throw ContractError("stacking needs at least two folds");
  if (m < static_cast<std::size_t>(K)) throw ContractError("fewer rows than folds");
  Rng rng(derive_seed(seed, 0xf01d));
  const auto perm = permutation(m, rng);
  std::vector<int> fold(m);
  for (std::size_t p = 0; p < m; ++p) fold[perm[p]] = static_cast<int>(p % static_cast<std::size_t>(K));
  return fold;
}

struct OofMatrix {
  std::size_t rows = 0;
  std::size_t bases = 0;
  std::vector<double> values;  // rows x bases, row-major
  std::vector<int> fold_of_row;
  /// Training rows of the fold-k models (shared by every base).
  std::vector<std::vector<std::size_t>> fold_training_rows;

  double operator()(std::size_t i, std::size_t b) const { return values[i * bases + b]; }
  std::vector<double> column(std::size_t b) const {
    std::vector<double> c(rows);
    for (std::size_t i = 0; i < rows; ++i) c[i] = (*this)(i, b);
    return c;
  }
};

/// Base config for fold k; distinct sub-seed per fold.
inline RegressorConfig fold_config(RegressorConfig c, int fold) {
  c.seed = derive_seed(c.seed, 0xf000 + static_cast<std::uint64_t>(fold));
  return c;
}

inline OofMatrix oof_predictions(const FeatureMatrix& X, std::span<const double> y,
                                 std::span<const RegressorConfig> base_configs, int K, std::uint64_t seed,
                                 unsigned threads = 1) {
  if (X.rows() != y.size()) throw ContractError("feature matrix and target differ in length");
  if (base_configs.empty()) throw ContractError("stacking needs at least one base model");
  for (const auto& c : base_configs) c.validate();
  const std::size_t m = y.size();
  OofMatrix oof;
  oof.rows = m;
  oof.bases = base_configs.size();
  oof.values.assign(m * oof.bases, 0.0);
  oof.fold_of_row = assign_folds(m, K, seed);
  oof.fold_training_rows.resize(static_cast<std::size_t>(K));
  std::vector<std::vector<std::size_t>> held_out(static_cast<std::size_t>(K));
  for (std::size_t i = 0; i < m; ++i) {
    const int f = oof.fold_of_row[i];
    held_out[static_cast<std::size_t>(f)].push_back(i);
    for (int k = 0; k < K; ++k)
      if (k != f) oof.fold_training_rows[static_cast<std::size_t>(k)].push_back(i);
  }
  const std::size_t units = static_cast<std::size_t>(K) * oof.bases;
  parallel_for(units, threads, [&](std::size_t u) {
    const std::size_t k = u / oof.bases, b = u % oof.bases;
    const auto& train = oof.fold_training_rows[k];
    const FeatureMatrix Xt = X.select_rows(train);
    std::vector<double> yt(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) yt[i] = y[train[i]];
    const auto model = learners::fit_regressor(fold_config(base_configs[b], static_cast<int>(k)), Xt, yt);
    for (std::size_t i : held_out[k]) oof.values[i * oof.bases + b] = model.predict_row(X.row(i));
  });
  return oof;
}

struct MetaModel {
  std::vector<double> coef;
  double intercept = 0.0;
  bool fallback = false;  // singular design: equal-weight average was used
  bool operator==(const MetaModel&) const = default;
};

/// OLS with intercept on the base-prediction columns. A (near-)singular
/// centered Gram matrix falls back to the equal-weight average.
inline MetaModel fit_meta(const OofMatrix& oof, std::span<const double> y) {
  const std::size_t m = oof.rows, B = oof.bases;
  if (y.size() != m) throw ContractError("target length differs from OOF rows");
  std::vector<double> mean(B, 0.0);
  double y_mean = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t b = 0; b < B; ++b) mean[b] += oof(i, b);
    y_mean += y[i];
  }
  for (auto& v : mean) v /= static_cast<double>(m);
  y_mean /= static_cast<double>(m);

  std::vector<double> G(B * B, 0.0), rhs(B, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double yc = y[i] - y_mean;
    for (std::size_t a = 0; a < B; ++a) {
      const double xa = oof(i, a) - mean[a];
      rhs[a] += xa * yc;
      for (std::size_t b = 0; b < B; ++b) G[a * B + b] += xa * (oof(i, b) - mean[b]);
    }
  }

  MetaModel meta;
  auto fallback = [&] {
    meta.coef.assign(B, 1.0 / static_cast<double>(B));
    meta.intercept = 0.0;
    meta.fallback = true;
    return meta;
  };

  // Cholesky; a pivot below 1e-10 of its original diagonal means the columns
  // are (numerically) collinear.
  std::vector<double> Lc(B * B, 0.0);
  for (std::size_t a = 0; a < B; ++a) {
    for (std::size_t b = 0; b <= a; ++b) {
      double s = G[a * B + b];
      for (std::size_t k = 0; k < b; ++k) s -= Lc[a * B + k] * Lc[b * B + k];
      if (a == b) {
        if (!(s > 1e-10 * G[a * B + a]) || !(G[a * B + a] > 0.0)) return fallback();
        Lc[a * B + a] = std::sqrt(s);
      } else {
        Lc[a * B + b] = s / Lc[b * B + b];
      }
    }
  }
  std::vector<double> z(B), w(B);
  for (std::size_t a = 0; a < B; ++a) {
    double s = rhs[a];
    for (std::size_t k = 0; k < a; ++k) s -= Lc[a * B + k] * z[k];
    z[a] = s / Lc[a * B + a];
  }
  for (std::size_t a = B; a-- > 0;) {
    double s = z[a];
    for (std::size_t k = a + 1; k < B; ++k) s -= Lc[k * B + a] * w[k];
    w[a] = s / Lc[a * B + a];
  }
  meta.coef = w;
  meta.intercept = y_mean;
  for (std::size_t b = 0; b < B; ++b) meta.intercept -= w[b] * mean[b];
  return meta;
}

class StackedModel {
 public:
  StackedModel() = default;
  StackedModel(std::vector<RegressorConfig> configs, int folds, std::vector<TrainedRegressor> bases, MetaModel meta)
      : configs_(std::move(configs)), folds_(folds), bases_(std::move(bases)), meta_(std::move(meta)) {
    if (bases_.size() != meta_.coef.size()) throw ContractError("one meta coefficient per base model required");
  }

  const std::vector<RegressorConfig>& base_configs() const { return configs_; }
  const std::vector<TrainedRegressor>& bases() const { return bases_; }
  const MetaModel& meta() const { return meta_; }
  int folds() const { return folds_; }

  double combine(std::span<const double> base_predictions) const {
    double out = meta_.intercept;
    for (std::size_t b = 0; b < base_predictions.size(); ++b) out += meta_.coef[b] * base_predictions[b];
    return out;
  }

  double predict_row(std::span<const double> x) const {
    if (x.size() != kNumFeatures) throw ContractError("expected 15 feature columns");
    std::vector<double> p(bases_.size());
    for (std::size_t b = 0; b < bases_.size(); ++b) p[b] = bases_[b].predict_row(x);
    return combine(p);
  }

  TargetVector predict(const FeatureMatrix& X) const {
    TargetVector out(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) out[i] = predict_row(X.row(i));
    return out;
  }

 private:
  std::vector<RegressorConfig> configs_;
  int folds_ = 5;
  std::vector<TrainedRegressor> bases_;
  MetaModel meta_;
};

/// Default base models: random forest and gradient boosting.
inline std::vector<RegressorConfig> default_base_configs(std::uint64_t seed) {
  return {learners::default_config(learners::Variant::RF, derive_seed(seed, 1)),
          learners::default_config(learners::Variant::GBRT, derive_seed(seed, 2))};
}

struct StackedFit {
  StackedModel model;
  OofMatrix oof;
  double meta_training_mse = 0.0;  // meta-model MSE on the OOF design
};

inline StackedFit fit_stacked_detailed(const FeatureMatrix& X, std::span<const double> y,
                                       std::span<const RegressorConfig> base_configs, int K, std::uint64_t seed,
                                       unsigned threads = 1) {
  StackedFit out;
  out.oof = oof_predictions(X, y, base_configs, K, seed, threads);
  MetaModel meta = fit_meta(out.oof, y);
  std::vector<TrainedRegressor> bases(base_configs.size());
  parallel_for(bases.size(), threads,
               [&](std::size_t b) { bases[b] = learners::fit_regressor(base_configs[b], X, y); });
  std::vector<double> meta_pred(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    double v = meta.intercept;
    for (std::size_t b = 0; b < out.oof.bases; ++b) v += meta.coef[b] * out.oof(i, b);
    meta_pred[i] = v;
  }
  out.meta_training_mse = mean_squared_residual(y, meta_pred);
  out.model = StackedModel({base_configs.begin(), base_configs.end()}, K, std::move(bases), std::move(meta));
  return out;
}

inline StackedModel fit_stacked(const FeatureMatrix& X, std::span<const double> y,
                                std::span<const RegressorConfig> base_configs, int K, std::uint64_t seed,
                                unsigned threads = 1) {
  return fit_stacked_detailed(X, y, base_configs, K, seed, threads).model;
}

inline json to_json(const StackedModel& model) {
  json bases = json::array();
  for (const auto& b : model.bases()) bases.push_back(learners::to_json(b));
  return {{"format", std::string(kStackedFormat)},
          {"kind", "stacked"},
          {"folds", model.folds()},
          {"bases", bases},
          {"meta", {{"coef", model.meta().coef}, {"intercept", model.meta().intercept},
                    {"fallback", model.meta().fallback}}}};
}

inline StackedModel stacked_from_json(const json& j) {
  if (j.value("format", "") != kStackedFormat) throw DataError("unsupported stacked model document format");
  std::vector<TrainedRegressor> bases;
  std::vector<RegressorConfig> configs;
  for (const auto& b : j.at("bases")) {
    bases.push_back(learners::regressor_from_json(b));
    configs.push_back(bases.back().config());
  }
  MetaModel meta;
  meta.coef = j.at("meta").at("coef").get<std::vector<double>>();
  meta.intercept = j.at("meta").at("intercept").get<double>();
  meta.fallback = j.at("meta").value("fallback", false);
  if (meta.coef.size() != bases.size()) throw DataError("meta coefficient count differs from base count");
  return StackedModel(std::move(configs), j.at("folds").get<int>(), std::move(bases), std::move(meta));
}

}  // namespace pcm::stacking
