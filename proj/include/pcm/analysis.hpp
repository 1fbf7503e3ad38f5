// Residual distribution, per-flight accumulated energy error, and
// ground-truth-vs-prediction traces for held-out flights.
#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "pcm/core.hpp"
#include "pcm/evaluate.hpp"

namespace pcm::analysis {

using evaluate::Predictor;

/// Reference battery capacity of the Matrice 100 standard pack (129.96 Wh).
inline constexpr double kMatrice100CapacityJ = 467856.0;
inline constexpr double kDefaultEnergyBoundJ = 2000.0;

struct ErrorDistribution {
  std::vector<double> errors;  // y - yhat, W
  double mean = 0.0;
  double sigma = 0.0;  // population standard deviation
  double within_1sigma = 1.0;
  double within_2sigma = 1.0;
  std::vector<double> bin_edges;  // bins + 1 edges
  std::vector<std::size_t> bin_counts;
};

/// Coverage fractions count residuals with |e - mean| <= k*sigma. With
/// sigma = 0 both fractions are 1.
inline ErrorDistribution error_distribution(std::span<const double> y, std::span<const double> yhat,
                                            std::size_t bins = 40) {
  if (y.size() != yhat.size()) throw ContractError("length mismatch between y and yhat");
  if (y.size() < 2) throw ContractError("error distribution needs at least two samples");
  if (bins == 0) throw ContractError("histogram needs at least one bin");
  ErrorDistribution d;
  const std::size_t n = y.size();
  d.errors.resize(n);
  for (std::size_t i = 0; i < n; ++i) d.errors[i] = y[i] - yhat[i];
  double sum = 0.0;
  for (double e : d.errors) sum += e;
  d.mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double e : d.errors) ss += (e - d.mean) * (e - d.mean);
  d.sigma = std::sqrt(ss / static_cast<double>(n));
  if (d.sigma > 0.0) {
    std::size_t c1 = 0, c2 = 0;
    for (double e : d.errors) {
      const double dev = std::abs(e - d.mean);
      if (dev <= d.sigma) ++c1;
      if (dev <= 2.0 * d.sigma) ++c2;
    }
    d.within_1sigma = static_cast<double>(c1) / static_cast<double>(n);
    d.within_2sigma = static_cast<double>(c2) / static_cast<double>(n);
  }
  const auto [lo_it, hi_it] = std::minmax_element(d.errors.begin(), d.errors.end());
  double lo = *lo_it, hi = *hi_it;
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  d.bin_edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b)
    d.bin_edges[b] = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
  d.bin_edges.back() = hi;
  d.bin_counts.assign(bins, 0);
  for (double e : d.errors) {
    auto b = static_cast<std::size_t>((e - lo) / (hi - lo) * static_cast<double>(bins));
    ++d.bin_counts[std::min(b, bins - 1)];
  }
  return d;
}

struct FlightData {
  std::string id;
  Dataset data;
};

/// Splits a dataset into flights, in order of first appearance.
inline std::vector<FlightData> split_flights(const Dataset& data) {
  std::vector<FlightData> out;
  for (const auto& [id, rows] : data.flights()) out.push_back({id, data.subset(rows)});
  return out;
}

struct FlightEnergyError {
  std::string flight_id;
  std::size_t samples = 0;
  double predicted_j = 0.0;
  double measured_j = 0.0;
  double error_j = 0.0;  // sum of (yhat - y) * 1 s
  double capacity_fraction = 0.0;
};

struct FlightEnergyReport {
  std::vector<FlightEnergyError> flights;
  std::size_t skipped = 0;  // empty flights
  double bound_j = kDefaultEnergyBoundJ;
  double capacity_j = kMatrice100CapacityJ;
  double coverage = 0.0;  // fraction of flights with |error| <= bound
};

/// Left Riemann sums at the fixed 1 s step of the aligned data.
inline FlightEnergyReport flight_energy_errors(const Predictor& predict, std::span<const FlightData> flights,
                                               double bound_j = kDefaultEnergyBoundJ,
                                               double capacity_j = kMatrice100CapacityJ) {
  if (!(capacity_j > 0.0)) throw ContractError("battery capacity must be positive");
  constexpr double dt = 1.0;
  FlightEnergyReport report;
  report.bound_j = bound_j;
  report.capacity_j = capacity_j;
  std::size_t covered = 0;
  for (const auto& f : flights) {
    if (f.data.size() == 0) {
      ++report.skipped;
      continue;
    }
    const auto yhat = predict(f.data.X);
    FlightEnergyError e;
    e.flight_id = f.id;
    e.samples = f.data.size();
    for (std::size_t i = 0; i < e.samples; ++i) {
      e.predicted_j += yhat[i] * dt;
      e.measured_j += f.data.y[i] * dt;
      e.error_j += (yhat[i] - f.data.y[i]) * dt;
    }
    e.capacity_fraction = e.error_j / capacity_j;
    if (std::abs(e.error_j) <= bound_j) ++covered;
    report.flights.push_back(std::move(e));
  }
  if (!report.flights.empty())
    report.coverage = static_cast<double>(covered) / static_cast<double>(report.flights.size());
  return report;
}

struct TraceComparison {
  std::string flight_id;
  std::vector<double> t;
  std::vector<double> truth;
  std::vector<double> prediction;
  evaluate::EvalReport report;
};

inline TraceComparison trace_comparison(const Predictor& predict, const FlightData& flight,
                                        std::span<const std::string> training_flights) {
  if (std::find(training_flights.begin(), training_flights.end(), flight.id) != training_flights.end())
    throw ContractError("flight '" + flight.id + "' was part of the training data");
  if (flight.data.size() < 2) throw ContractError("trace needs at least two samples");
  TraceComparison out;
  out.flight_id = flight.id;
  out.t = flight.data.t;
  out.truth = flight.data.y;
  out.prediction = predict(flight.data.X);
  out.report = evaluate::make_report(out.truth, out.prediction, evaluate::SplitKind::testing, "", flight.id);
  return out;
}

}  // namespace pcm::analysis
