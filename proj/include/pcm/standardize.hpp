#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "pcm/core.hpp"

namespace pcm::learners {

/// Per-column centering and scaling fitted on training rows only. An empty
/// standardization is the identity (used by the tree learners).
struct Standardization {
  std::vector<double> mean;
  std::vector<double> scale;

  bool is_identity() const { return mean.empty(); }

  /// Population mean / standard deviation; constant columns get scale 1.
  static Standardization fit(const FeatureMatrix& X) {
    Standardization s;
    s.mean.assign(kNumFeatures, 0.0);
    s.scale.assign(kNumFeatures, 1.0);
    const std::size_t m = X.rows();
    if (m == 0) return s;
    for (std::size_t j = 0; j < kNumFeatures; ++j) {
      double sum = 0.0;
      for (std::size_t i = 0; i < m; ++i) sum += X(i, j);
      const double mu = sum / static_cast<double>(m);
      double ss = 0.0;
      for (std::size_t i = 0; i < m; ++i) ss += (X(i, j) - mu) * (X(i, j) - mu);
      const double sd = std::sqrt(ss / static_cast<double>(m));
      s.mean[j] = mu;
      s.scale[j] = sd > 1e-12 * std::max(1.0, std::abs(mu)) ? sd : 1.0;
    }
    return s;
  }

  void apply(std::span<const double> x, std::span<double> out) const {
    for (std::size_t j = 0; j < kNumFeatures; ++j) out[j] = (x[j] - mean[j]) / scale[j];
  }

  FeatureMatrix apply(const FeatureMatrix& X) const {
    if (is_identity()) return X;
    FeatureMatrix Z(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) apply(X.row(i), Z.row(i));
    return Z;
  }

  bool operator==(const Standardization&) const = default;
};

}  // namespace pcm::learners
