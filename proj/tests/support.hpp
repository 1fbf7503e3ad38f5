// Shared generators and fixtures for the unit tests.
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pcm/core.hpp"
#include "pcm/synth.hpp"

namespace pcm::test {

/// m rows of uniform features in [-1, 1] with a smooth nonlinear target.
inline Dataset random_dataset(std::size_t m, std::uint64_t seed, double noise = 0.1, std::size_t flights = 5) {
  Rng rng(seed);
  Dataset d;
  d.X = FeatureMatrix(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < kNumFeatures; ++j) d.X(i, j) = 2.0 * uniform01(rng) - 1.0;
    const double x0 = d.X(i, 0), x1 = d.X(i, 1), x2 = d.X(i, 2);
    d.y.push_back(3.0 + 2.0 * x0 - x1 + std::sin(3.0 * x2) + x0 * x1 + noise * standard_normal(rng));
    d.flight_id.push_back("F" + std::to_string(i % std::max<std::size_t>(flights, 1)));
    d.t.push_back(static_cast<double>(i));
  }
  return d;
}

/// Small synthetic Matrice-100 fleet.
inline Dataset fleet_dataset(std::size_t flights, std::uint64_t seed, double min_s = 60, double max_s = 120) {
  auto cfg = synth::preset(Aircraft::matrice100);
  cfg.n_flights = flights;
  cfg.seed = seed;
  cfg.min_duration_s = min_s;
  cfg.max_duration_s = max_s;
  return synth::to_dataset(synth::generate_fleet(cfg));
}

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

}  // namespace pcm::test
