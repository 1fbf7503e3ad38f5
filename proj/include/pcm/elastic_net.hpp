// Elastic-net linear regression by cyclic coordinate descent.
//
// Minimizes  ||y - X w - b||^2 + alpha*beta*||w||_1 + alpha*(1-beta)/2 * ||w||^2
// on standardized features; the intercept b is unpenalized.
#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "pcm/core.hpp"
#include "pcm/standardize.hpp"

namespace pcm::learners {

struct LinearModel {
  std::vector<double> weights;  // standardized feature space
  double intercept = 0.0;

  double predict_standardized(std::span<const double> z) const {
    double out = intercept;
    for (std::size_t j = 0; j < weights.size(); ++j) out += weights[j] * z[j];
    return out;
  }

  bool operator==(const LinearModel&) const = default;
};

struct ElasticNetOptions {
  double objective_tol = 1e-6;  // relative objective change per sweep
  double coef_tol = 1e-9;       // max coefficient change, relative to max(1, |w|_inf)
  int max_sweeps = 10000;
};

struct ElasticNetFit {
  Standardization standardization;
  LinearModel model;
  std::vector<double> objective_history;  // after each sweep
  int sweeps = 0;
  bool converged = false;

  /// Coefficients and intercept mapped back to raw feature units.
  std::vector<double> raw_weights() const {
    std::vector<double> w(model.weights.size());
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = model.weights[j] / standardization.scale[j];
    return w;
  }
  double raw_intercept() const {
    double b = model.intercept;
    for (std::size_t j = 0; j < model.weights.size(); ++j)
      b -= model.weights[j] * standardization.mean[j] / standardization.scale[j];
    return b;
  }
};

inline double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

inline ElasticNetFit fit_elastic_net(const FeatureMatrix& X, std::span<const double> y, double alpha, double beta,
                                     const ElasticNetOptions& opts = {}) {
  if (X.rows() != y.size()) throw ContractError("feature matrix and target differ in length");
  if (y.empty()) throw ContractError("elastic net needs at least one row");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ContractError("alpha must be a finite value >= 0");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ContractError("beta must lie in [0, 1]");
  if (!X.all_finite()) throw DataError("elastic net input contains non-finite features");
  for (double v : y)
    if (!std::isfinite(v)) throw DataError("elastic net input contains non-finite targets");

  const std::size_t m = X.rows();
  constexpr std::size_t p = kNumFeatures;
  ElasticNetFit fit;
  fit.standardization = Standardization::fit(X);

  // Column-major standardized design.
  std::vector<double> Z(p * m);
  std::vector<double> col_sq(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t i = 0; i < m; ++i) {
      const double z = (X(i, j) - fit.standardization.mean[j]) / fit.standardization.scale[j];
      Z[j * m + i] = z;
      col_sq[j] += z * z;
    }
  }
  double y_mean = 0.0;
  for (double v : y) y_mean += v;
  y_mean /= static_cast<double>(m);
  std::vector<double> r(m);
  for (std::size_t i = 0; i < m; ++i) r[i] = y[i] - y_mean;

  const double l1 = alpha * beta;
  const double l2 = alpha * (1.0 - beta);
  std::vector<double> w(p, 0.0);

  auto objective = [&] {
    double rss = 0.0;
    for (double v : r) rss += v * v;
    double a1 = 0.0, a2 = 0.0;
    for (double v : w) {
      a1 += std::abs(v);
      a2 += v * v;
    }
    return rss + l1 * a1 + 0.5 * l2 * a2;
  };

  double prev = objective();
  for (int sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
    double max_delta = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      const double denom = 2.0 * col_sq[j] + l2;
      if (denom <= 0.0) continue;
      const double* zj = Z.data() + j * m;
      double rho = col_sq[j] * w[j];
      for (std::size_t i = 0; i < m; ++i) rho += zj[i] * r[i];
      const double updated = soft_threshold(2.0 * rho, l1) / denom;
      const double delta = updated - w[j];
      if (delta != 0.0) {
        for (std::size_t i = 0; i < m; ++i) r[i] -= zj[i] * delta;
        w[j] = updated;
        max_delta = std::max(max_delta, std::abs(delta));
      }
    }
    const double obj = objective();
    fit.objective_history.push_back(obj);
    fit.sweeps = sweep;
    double w_inf = 1.0;
    for (double v : w) w_inf = std::max(w_inf, std::abs(v));
    const bool obj_ok = prev - obj <= opts.objective_tol * std::max(std::abs(prev), 1e-300);
    const bool coef_ok = max_delta <= opts.coef_tol * w_inf;
    prev = obj;
    if (obj_ok && coef_ok) {
      fit.converged = true;
      break;
    }
  }
  fit.model.weights = std::move(w);
  fit.model.intercept = y_mean;
  return fit;
}

}  // namespace pcm::learners
