// Shared domain types for the power-consumption-model toolkit.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pcm {

inline constexpr std::string_view kVersion = "1.0.0";

// Errors. The CLI maps ContractError -> 1, DataError -> 2, NumericError -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};

inline constexpr std::size_t kNumFeatures = 15;

/// Column order of every feature matrix produced or consumed by the toolkit.
inline constexpr std::array<std::string_view, kNumFeatures> kFeatureNames = {
    "mass", "v_n",  "v_e",   "v_d",       "a_n",        "a_e",      "a_d", "roll",
    "pitch", "yaw", "roll_rate", "pitch_rate", "yaw_rate", "w_n", "w_e"};

enum class Aircraft { unknown, mavic_pro, inspire, matrice100 };

inline std::string_view to_string(Aircraft a) {
  switch (a) {
    case Aircraft::mavic_pro: return "mavic_pro";
    case Aircraft::inspire: return "inspire";
    case Aircraft::matrice100: return "matrice100";
    default: return "unknown";
  }
}

inline Aircraft aircraft_from_string(std::string_view s) {
  if (s == "mavic_pro") return Aircraft::mavic_pro;
  if (s == "inspire") return Aircraft::inspire;
  if (s == "matrice100") return Aircraft::matrice100;
  if (s == "unknown") return Aircraft::unknown;
  throw ContractError("unknown aircraft '" + std::string(s) + "'");
}

using Vec3 = std::array<double, 3>;

/// One time-aligned record. Velocities and accelerations are earth-fixed NED
/// (down positive); angles in rad; wind is the horizontal (north, east) vector.
struct FlightSample {
  double t = 0.0;
  double mass = 0.0;
  Vec3 v{};
  Vec3 a{};
  Vec3 euler{};       // roll, pitch, yaw
  Vec3 euler_rate{};  // roll rate, pitch rate, yaw rate
  std::array<double, 2> wind{};
  double power = 0.0;
  std::string flight_id;
  Aircraft aircraft = Aircraft::unknown;

  std::array<double, kNumFeatures> features() const {
    return {mass,     v[0],     v[1],          v[2],          a[0],          a[1],
            a[2],     euler[0], euler[1],      euler[2],      euler_rate[0], euler_rate[1],
            euler_rate[2], wind[0], wind[1]};
  }

  bool operator==(const FlightSample&) const = default;
};

using Flight = std::vector<FlightSample>;

/// Dense row-major m x 15 matrix.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  explicit FeatureMatrix(std::size_t rows) : rows_(rows), data_(rows * kNumFeatures, 0.0) {}
  FeatureMatrix(std::size_t rows, std::vector<double> values) : rows_(rows), data_(std::move(values)) {
    if (data_.size() != rows_ * kNumFeatures)
      throw ContractError("feature matrix needs exactly 15 columns");
  }

  std::size_t rows() const { return rows_; }
  static constexpr std::size_t cols() { return kNumFeatures; }

  double operator()(std::size_t i, std::size_t j) const { return data_[i * kNumFeatures + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * kNumFeatures + j]; }

  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * kNumFeatures, kNumFeatures};
  }
  std::span<double> row(std::size_t i) { return {data_.data() + i * kNumFeatures, kNumFeatures}; }

  const std::vector<double>& values() const { return data_; }

  FeatureMatrix select_rows(std::span<const std::size_t> idx) const {
    FeatureMatrix out(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      auto src = row(idx[k]);
      std::copy(src.begin(), src.end(), out.row(k).begin());
    }
    return out;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
  }

  bool operator==(const FeatureMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::vector<double> data_;
};

using TargetVector = std::vector<double>;

/// Model-ready data with the per-row flight bookkeeping the file format carries.
struct Dataset {
  FeatureMatrix X;
  TargetVector y;
  std::vector<std::string> flight_id;
  std::vector<double> t;

  std::size_t size() const { return y.size(); }

  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset out;
    out.X = X.select_rows(idx);
    out.y.reserve(idx.size());
    out.flight_id.reserve(idx.size());
    out.t.reserve(idx.size());
    for (auto i : idx) {
      out.y.push_back(y[i]);
      out.flight_id.push_back(flight_id.empty() ? std::string() : flight_id[i]);
      out.t.push_back(t.empty() ? 0.0 : t[i]);
    }
    return out;
  }

  /// Row indices per flight, flights in order of first appearance.
  std::vector<std::pair<std::string, std::vector<std::size_t>>> flights() const {
    std::vector<std::pair<std::string, std::vector<std::size_t>>> out;
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < size(); ++i) {
      const std::string& id = flight_id.empty() ? std::string() : flight_id[i];
      auto [it, inserted] = pos.emplace(id, out.size());
      if (inserted) out.push_back({id, {}});
      out[it->second].second.push_back(i);
    }
    return out;
  }

  void validate() const {
    if (X.rows() != y.size()) throw ContractError("feature matrix and target differ in length");
    if (!flight_id.empty() && flight_id.size() != y.size())
      throw ContractError("flight_id column differs in length from target");
    if (!t.empty() && t.size() != y.size()) throw ContractError("t column differs in length from target");
    if (!X.all_finite()) throw DataError("feature matrix contains non-finite values");
    for (double v : y)
      if (!std::isfinite(v)) throw DataError("target contains non-finite values");
  }
};

inline Dataset concat(std::span<const Dataset> parts) {
  Dataset out;
  std::vector<double> values;
  std::size_t rows = 0;
  for (const auto& p : parts) {
    values.insert(values.end(), p.X.values().begin(), p.X.values().end());
    rows += p.X.rows();
    out.y.insert(out.y.end(), p.y.begin(), p.y.end());
    out.flight_id.insert(out.flight_id.end(), p.flight_id.begin(), p.flight_id.end());
    out.t.insert(out.t.end(), p.t.begin(), p.t.end());
  }
  out.X = FeatureMatrix(rows, std::move(values));
  return out;
}

// ---------------------------------------------------------------------------
// Randomness. Every stochastic routine takes an explicit seed; sub-streams are
// derived with splitmix64 so results do not depend on evaluation order.

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(seed, a), b);
}

/// Uniform index in [0, n). Multiply-shift keeps the stream portable across
/// standard library implementations.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double standard_normal(Rng& rng) {
  // Box-Muller; one value per call keeps the stream stateless.
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

inline std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  shuffle(idx, rng);
  return idx;
}

/// k distinct indices from [0, n), in draw order.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  if (k > n) throw ContractError("cannot draw more samples than available");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
  idx.resize(k);
  return idx;
}

// ---------------------------------------------------------------------------
// Loss.

struct LossConfig {
  double alpha = 0.0;   // L1 weight
  double lambda = 0.0;  // L2 weight
};

/// (1/m) sum (y - yhat)^2. Shared by total_loss and the evaluation metrics so
/// both follow the same summation order.
inline double mean_squared_residual(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw ContractError("length mismatch between y and yhat");
  if (y.empty()) throw ContractError("empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - yhat[i];
    sum += r * r;
  }
  return sum / static_cast<double>(y.size());
}

/// MSE plus alpha*||theta||_1 + (lambda/2)*||theta||_2^2.
inline double total_loss(std::span<const double> y, std::span<const double> yhat,
                         std::span<const double> theta, const LossConfig& cfg) {
  if (cfg.alpha < 0.0 || cfg.lambda < 0.0) throw ContractError("loss weights must be non-negative");
  const double data = mean_squared_residual(y, yhat);
  double l1 = 0.0, l2 = 0.0;
  for (double w : theta) {
    if (!std::isfinite(w)) throw ContractError("non-finite parameter");
    l1 += std::abs(w);
    l2 += w * w;
  }
  return data + cfg.alpha * l1 + 0.5 * cfg.lambda * l2;
}

// ---------------------------------------------------------------------------
// Train/test split.

enum class SplitMode { by_sample, by_flight };

struct SplitSpec {
  double train_fraction = 0.7;
  std::uint64_t seed = 0;
  SplitMode mode = SplitMode::by_sample;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Random partition of the rows. By-flight mode assigns round(fraction * flights)
/// whole flights to training; by-sample assigns round(fraction * m) rows.
/// Both index lists are returned in ascending order.
inline SplitIndices split_indices(const Dataset& data, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    throw ContractError("train_fraction must lie in (0, 1)");
  const std::size_t m = data.size();
  if (m < 2) throw ContractError("split needs at least two rows");
  Rng rng(derive_seed(spec.seed, 0x5b11));
  SplitIndices out;
  if (spec.mode == SplitMode::by_sample) {
    auto perm = permutation(m, rng);
    auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(m)));
    n_train = std::clamp<std::size_t>(n_train, 1, m - 1);
    out.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  } else {
    auto groups = data.flights();
    if (groups.size() < 2) throw ContractError("by-flight split needs at least two flights");
    auto order = permutation(groups.size(), rng);
    auto n_train = static_cast<std::size_t>(
        std::llround(spec.train_fraction * static_cast<double>(groups.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, groups.size() - 1);
    for (std::size_t k = 0; k < order.size(); ++k) {
      auto& dst = k < n_train ? out.train : out.test;
      const auto& rows = groups[order[k]].second;
      dst.insert(dst.end(), rows.begin(), rows.end());
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

struct SplitData {
  Dataset train;
  Dataset test;
};

inline SplitData split(const Dataset& data, const SplitSpec& spec) {
  auto idx = split_indices(data, spec);
  return {data.subset(idx.train), data.subset(idx.test)};
}

}  // namespace pcm
