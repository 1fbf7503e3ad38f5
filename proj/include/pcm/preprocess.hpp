// Raw multi-rate channels to clean 1 Hz samples, plus the cleaned-dataset
// file format.
//
// Pipeline per flight: median filter at native rate, differentiate, align to
// 1 s bins (arithmetic mean), drop samples at or below the power floor.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "pcm/core.hpp"
#include "pcm/ingest.hpp"
#include "pcm/text.hpp"

namespace pcm::preprocess {

using ingest::ChannelKind;
using ingest::RawChannel;

struct FilterConfig {
  int median_window = 5;
  double align_step = 1.0;  // fixed; stored so manifests record it
  double power_floor = 20.0;
  bool wind_direction_is_from = true;  // meteorological convention

  void validate() const {
    if (median_window < 3 || median_window % 2 == 0)
      throw ContractError("median_window must be an odd integer >= 3");
    if (align_step != 1.0) throw ContractError("align_step is fixed at 1.0 s");
    if (!(power_floor >= 0.0)) throw ContractError("power_floor must be non-negative");
  }
};

/// Running median; edges use the largest symmetric window that fits.
inline std::vector<double> median_filter(std::span<const double> x, int window) {
  if (window < 1 || window % 2 == 0) throw ContractError("median window must be odd, got " + std::to_string(window));
  if (static_cast<std::size_t>(window) > x.size())
    throw ContractError("median window " + std::to_string(window) + " exceeds series length " +
                        std::to_string(x.size()));
  const std::size_t n = x.size();
  const std::size_t h = static_cast<std::size_t>(window / 2);
  std::vector<double> out(n), buf;
  buf.reserve(static_cast<std::size_t>(window));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = std::min({h, i, n - 1 - i});
    buf.assign(x.begin() + static_cast<std::ptrdiff_t>(i - r), x.begin() + static_cast<std::ptrdiff_t>(i + r + 1));
    std::nth_element(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(r), buf.end());
    out[i] = buf[r];
  }
  return out;
}

/// Central differences inside, one-sided at both ends.
inline std::vector<double> differentiate(std::span<const double> t, std::span<const double> x) {
  if (t.size() != x.size()) throw ContractError("differentiate: t and x differ in length");
  if (t.size() < 2) throw ContractError("differentiate needs at least two samples");
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (t[i] == t[i - 1]) throw DataError("duplicate timestamp " + text::format_double(t[i]) + " at index " + std::to_string(i));
    if (t[i] < t[i - 1]) throw ContractError("differentiate: timestamps must be strictly increasing");
  }
  const std::size_t n = t.size();
  std::vector<double> d(n);
  d[0] = (x[1] - x[0]) / (t[1] - t[0]);
  d[n - 1] = (x[n - 1] - x[n - 2]) / (t[n - 1] - t[n - 2]);
  for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (x[i + 1] - x[i - 1]) / (t[i + 1] - t[i - 1]);
  return d;
}

/// Removes 2*pi jumps so consecutive angles differ by at most pi.
inline std::vector<double> unwrap(std::span<const double> angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::vector<double> out(angle.begin(), angle.end());
  double offset = 0.0;
  for (std::size_t i = 1; i < out.size(); ++i) {
    const double d = angle[i] - angle[i - 1];
    if (d > std::numbers::pi) offset -= two_pi * std::ceil((d - std::numbers::pi) / two_pi);
    else if (d < -std::numbers::pi) offset += two_pi * std::ceil((-d - std::numbers::pi) / two_pi);
    out[i] = angle[i] + offset;
  }
  return out;
}

/// Maps to (-pi, pi]; values already in range are returned unchanged.
inline double wrap_angle(double a) {
  if (a > -std::numbers::pi && a <= std::numbers::pi) return a;
  double r = std::remainder(a, 2.0 * std::numbers::pi);
  if (r <= -std::numbers::pi) r += 2.0 * std::numbers::pi;
  return r;
}

/// Horizontal wind vector (north, east) from speed and bearing in degrees.
inline std::array<double, 2> wind_components(double speed, double direction_deg, bool direction_is_from = true) {
  const double th = direction_deg * std::numbers::pi / 180.0;
  const double s = direction_is_from ? -speed : speed;
  return {s * std::cos(th), s * std::sin(th)};
}

inline constexpr double kEarthRadiusM = 6371000.0;

/// Local NED position (m) relative to the first fix, equirectangular.
inline std::array<std::vector<double>, 3> gps_to_ned(std::span<const double> lat_deg, std::span<const double> lon_deg,
                                                     std::span<const double> alt_m) {
  std::array<std::vector<double>, 3> ned;
  if (lat_deg.empty()) return ned;
  const double k = std::numbers::pi / 180.0;
  const double lat0 = lat_deg[0], lon0 = lon_deg[0], alt0 = alt_m[0];
  const double c = std::cos(lat0 * k);
  for (std::size_t i = 0; i < lat_deg.size(); ++i) {
    ned[0].push_back((lat_deg[i] - lat0) * k * kEarthRadiusM);
    ned[1].push_back((lon_deg[i] - lon0) * k * kEarthRadiusM * c);
    ned[2].push_back(-(alt_m[i] - alt0));
  }
  return ned;
}

/// Canonical column names the aligner understands. Every one of them except
/// the wind pair must be supplied by exactly one channel.
inline const std::vector<std::string>& canonical_columns() {
  static const std::vector<std::string> cols{"v_n",      "v_e",        "v_d",       "a_n",     "a_e",
                                             "a_d",      "roll",       "pitch",     "yaw",     "roll_rate",
                                             "pitch_rate", "yaw_rate", "w_n",       "w_e",     "power"};
  return cols;
}

namespace detail {

inline int fitted_window(int window, std::size_t n) {
  int w = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(window), n));
  if (w % 2 == 0) --w;
  return std::max(w, 1);
}

inline std::vector<double> filtered(std::span<const double> x, int window) {
  return median_filter(x, fitted_window(window, x.size()));
}

}  // namespace detail

/// Filters and differentiates a parsed log into channels with canonical
/// columns. A log without a wind channel is treated as calm air.
inline std::vector<RawChannel> derive_channels(const ingest::FlightLog& log, const FilterConfig& cfg) {
  cfg.validate();
  const int w = cfg.median_window;
  std::vector<RawChannel> out;
  auto make = [](const RawChannel& src, std::vector<std::string> cols, std::vector<std::vector<double>> vals) {
    RawChannel c;
    c.kind = src.kind;
    c.rate_hz = src.rate_hz;
    c.t = src.t;
    c.columns = std::move(cols);
    c.values = std::move(vals);
    return c;
  };

  if (log.schema == ingest::Schema::matrice100) {
    const auto* ks = log.find(ChannelKind::kinematic_state);
    if (!ks) throw DataError("log lacks kinematic_state channel");
    std::vector<std::vector<double>> vals;
    std::vector<std::string> cols;
    for (std::size_t c = 0; c < ks->columns.size(); ++c) {
      const auto& name = ks->columns[c];
      cols.push_back(name);
      vals.push_back(detail::filtered(name == "yaw" ? unwrap(ks->values[c]) : ks->values[c], w));
    }
    out.push_back(make(*ks, cols, vals));
  } else {
    const auto* gps = log.find(ChannelKind::gps_position);
    const auto* imu = log.find(ChannelKind::imu);
    if (!gps || !imu) throw DataError("log lacks gps_position or imu channel");
    auto ned = gps_to_ned(gps->column("latitude"), gps->column("longitude"), gps->column("altitude"));
    std::vector<std::vector<double>> vel(3), acc(3);
    for (int k = 0; k < 3; ++k) {
      vel[k] = differentiate(gps->t, detail::filtered(ned[k], w));
      acc[k] = differentiate(gps->t, vel[k]);
    }
    out.push_back(make(*gps, {"v_n", "v_e", "v_d", "a_n", "a_e", "a_d"},
                       {vel[0], vel[1], vel[2], acc[0], acc[1], acc[2]}));
    std::vector<std::vector<double>> ang(3), rate(3);
    const char* names[3] = {"roll", "pitch", "yaw"};
    for (int k = 0; k < 3; ++k) {
      const auto& raw = imu->column(names[k]);
      ang[k] = detail::filtered(k == 2 ? unwrap(raw) : raw, w);
      rate[k] = differentiate(imu->t, ang[k]);
    }
    out.push_back(make(*imu, {"roll", "pitch", "yaw", "roll_rate", "pitch_rate", "yaw_rate"},
                       {ang[0], ang[1], ang[2], rate[0], rate[1], rate[2]}));
  }

  if (const auto* wind = log.find(ChannelKind::wind)) {
    const auto& sp = wind->column("wind_speed");
    const auto& dir = wind->column("wind_direction");
    std::vector<double> wn(sp.size()), we(sp.size());
    for (std::size_t i = 0; i < sp.size(); ++i) {
      const auto c = wind_components(sp[i], dir[i], cfg.wind_direction_is_from);
      wn[i] = c[0];
      we[i] = c[1];
    }
    out.push_back(make(*wind, {"w_n", "w_e"}, {detail::filtered(wn, w), detail::filtered(we, w)}));
  }

  const auto* bat = log.find(ChannelKind::battery);
  if (!bat) throw DataError("log lacks battery channel");
  out.push_back(make(*bat, {"power"}, {detail::filtered(bat->column("power"), w)}));
  return out;
}

struct SampleContext {
  double mass = 0.0;
  std::string flight_id;
  Aircraft aircraft = Aircraft::unknown;
};

/// One sample per whole second k in the common span whose bin [k, k+1) is
/// non-empty in every channel; fields are bin means. Missing wind columns
/// read as zero. Yaw is averaged on the continuous angle, then wrapped.
inline Flight align_1hz(std::span<const RawChannel> channels, const SampleContext& ctx) {
  if (channels.empty()) throw DataError("no channels to align");
  const auto& canon = canonical_columns();
  constexpr std::size_t kFields = 15;
  struct Source {
    std::size_t channel = 0, column = 0;
    bool present = false;
  };
  std::array<Source, kFields> src{};
  for (std::size_t ch = 0; ch < channels.size(); ++ch) {
    const auto& c = channels[ch];
    if (c.t.empty()) throw DataError("channel " + std::string(ingest::to_string(c.kind)) + " is empty");
    if (c.values.size() != c.columns.size()) throw ContractError("channel column/value count mismatch");
    for (std::size_t col = 0; col < c.columns.size(); ++col) {
      const auto it = std::find(canon.begin(), canon.end(), c.columns[col]);
      if (it == canon.end()) continue;
      auto& s = src[static_cast<std::size_t>(it - canon.begin())];
      if (s.present) throw DataError("column '" + c.columns[col] + "' supplied by more than one channel");
      s = {ch, col, true};
    }
  }
  for (std::size_t f = 0; f < kFields; ++f)
    if (!src[f].present && canon[f] != "w_n" && canon[f] != "w_e")
      throw DataError("no channel supplies column '" + canon[f] + "'");

  double start = -INFINITY, end = INFINITY;
  for (const auto& c : channels) {
    start = std::max(start, c.t.front());
    end = std::min(end, c.t.back());
  }
  if (end < start) throw DataError("channels share no common time span");

  const auto k0 = static_cast<long long>(std::ceil(start));
  const auto k1 = static_cast<long long>(std::floor(end));
  std::vector<std::size_t> cursor(channels.size(), 0);
  Flight flight;
  std::vector<std::pair<std::size_t, std::size_t>> bin(channels.size());
  for (long long k = k0; k <= k1; ++k) {
    const double lo = static_cast<double>(k), hi = lo + 1.0;
    bool empty = false;
    for (std::size_t ch = 0; ch < channels.size(); ++ch) {
      const auto& t = channels[ch].t;
      std::size_t i = cursor[ch];
      while (i < t.size() && t[i] < lo) ++i;
      std::size_t j = i;
      while (j < t.size() && t[j] < hi) ++j;
      cursor[ch] = j;
      bin[ch] = {i, j};
      if (i == j) empty = true;
    }
    if (empty) continue;
    std::array<double, kFields> v{};
    for (std::size_t f = 0; f < kFields; ++f) {
      if (!src[f].present) continue;
      const auto [i, j] = bin[src[f].channel];
      const auto& col = channels[src[f].channel].values[src[f].column];
      double sum = 0.0;
      for (std::size_t r = i; r < j; ++r) sum += col[r];
      v[f] = sum / static_cast<double>(j - i);
    }
    FlightSample s;
    s.t = lo;
    s.mass = ctx.mass;
    s.v = {v[0], v[1], v[2]};
    s.a = {v[3], v[4], v[5]};
    s.euler = {v[6], v[7], wrap_angle(v[8])};
    s.euler_rate = {v[9], v[10], v[11]};
    s.wind = {v[12], v[13]};
    s.power = v[14];
    s.flight_id = ctx.flight_id;
    s.aircraft = ctx.aircraft;
    flight.push_back(std::move(s));
  }
  return flight;
}

/// Channels that hold a flight's samples one row each; align_1hz of these
/// reproduces the samples.
inline std::vector<RawChannel> samples_to_channels(const Flight& flight) {
  RawChannel c;
  c.kind = ChannelKind::kinematic_state;
  c.rate_hz = 1.0;
  c.columns = canonical_columns();
  c.values.assign(c.columns.size(), {});
  for (const auto& s : flight) {
    c.t.push_back(s.t);
    const std::array<double, 15> v{s.v[0],          s.v[1],          s.v[2],          s.a[0],    s.a[1],
                                   s.a[2],          s.euler[0],      s.euler[1],      s.euler[2], s.euler_rate[0],
                                   s.euler_rate[1], s.euler_rate[2], s.wind[0],       s.wind[1], s.power};
    for (std::size_t f = 0; f < v.size(); ++f) c.values[f].push_back(v[f]);
  }
  return {c};
}

struct FloorResult {
  Flight samples;
  std::size_t removed = 0;
};

/// Keeps samples with power strictly above the floor, in order.
inline FloorResult apply_power_floor(Flight samples, double floor = 20.0) {
  FloorResult r;
  r.samples.reserve(samples.size());
  for (auto& s : samples) {
    if (s.power > floor) r.samples.push_back(std::move(s));
    else ++r.removed;
  }
  return r;
}

struct PreprocessResult {
  Flight samples;
  std::size_t aligned = 0;        // samples before the power floor
  std::size_t below_floor = 0;
};

inline PreprocessResult preprocess_log(const ingest::FlightLog& log, const FilterConfig& cfg = {}) {
  const auto channels = derive_channels(log, cfg);
  auto aligned = align_1hz(channels, {log.mass_kg(), log.flight_id, log.aircraft.aircraft});
  PreprocessResult r;
  r.aligned = aligned.size();
  auto floored = apply_power_floor(std::move(aligned), cfg.power_floor);
  r.samples = std::move(floored.samples);
  r.below_floor = floored.removed;
  return r;
}

inline Dataset to_feature_matrix(std::span<const FlightSample> samples) {
  if (samples.empty()) throw ContractError("no samples to convert");
  Dataset d;
  d.X = FeatureMatrix(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const auto f = s.features();
    for (std::size_t j = 0; j < kNumFeatures; ++j) {
      if (!std::isfinite(f[j]))
        throw DataError("sample " + std::to_string(i) + " has non-finite " + std::string(kFeatureNames[j]));
      d.X(i, j) = f[j];
    }
    if (!std::isfinite(s.power)) throw DataError("sample " + std::to_string(i) + " has non-finite power");
    d.y.push_back(s.power);
    d.flight_id.push_back(s.flight_id);
    d.t.push_back(s.t);
  }
  return d;
}

/// 16 x 16 Pearson matrix over the 15 features and power (last). Rows and
/// columns of constant variables are NaN, including their diagonal entry.
inline std::vector<std::vector<double>> correlation_heatmap(const FeatureMatrix& X, std::span<const double> y) {
  const std::size_t m = X.rows();
  if (y.size() != m) throw ContractError("feature matrix and target differ in length");
  if (m < 3) throw ContractError("correlation needs at least three rows");
  constexpr std::size_t p = kNumFeatures + 1;
  std::vector<std::vector<double>> cols(p, std::vector<double>(m));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < kNumFeatures; ++j) cols[j][i] = X(i, j);
    cols[kNumFeatures][i] = y[i];
  }
  std::vector<double> sd(p);
  for (auto& c : cols) {
    double mean = 0.0;
    for (double v : c) mean += v;
    mean /= static_cast<double>(m);
    for (double& v : c) v -= mean;
  }
  for (std::size_t j = 0; j < p; ++j) {
    double ss = 0.0;
    for (double v : cols[j]) ss += v * v;
    sd[j] = std::sqrt(ss);
  }
  std::vector<std::vector<double>> r(p, std::vector<double>(p, std::numeric_limits<double>::quiet_NaN()));
  for (std::size_t a = 0; a < p; ++a) {
    if (!(sd[a] > 0.0)) continue;
    r[a][a] = 1.0;
    for (std::size_t b = a + 1; b < p; ++b) {
      if (!(sd[b] > 0.0)) continue;
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) s += cols[a][i] * cols[b][i];
      const double c = std::clamp(s / (sd[a] * sd[b]), -1.0, 1.0);
      r[a][b] = r[b][a] = c;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Cleaned-dataset file: comma-separated, one header row, then one row per
// sample with columns flight_id, t, the 15 features in model order, power.

inline std::string dataset_header() {
  std::string h = "flight_id,t";
  for (auto n : kFeatureNames) {
    h += ',';
    h += n;
  }
  h += ",power";
  return h;
}

inline std::string format_dataset(const Dataset& d) {
  d.validate();
  std::string out = dataset_header() + "\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    out += d.flight_id.empty() ? std::string() : d.flight_id[i];
    out += ',';
    out += text::format_double(d.t.empty() ? 0.0 : d.t[i]);
    for (std::size_t j = 0; j < kNumFeatures; ++j) {
      out += ',';
      out += text::format_double(d.X(i, j));
    }
    out += ',';
    out += text::format_double(d.y[i]);
    out += '\n';
  }
  return out;
}

inline void write_dataset(const std::string& path, const Dataset& d) { text::write_file(path, format_dataset(d)); }

inline Dataset parse_dataset(std::string_view content, const std::string& source = "<dataset>") {
  Dataset d;
  std::vector<double> values;
  std::size_t line_no = 0, pos = 0;
  bool header_seen = false;
  const std::size_t width = kNumFeatures + 3;
  while (pos < content.size()) {
    auto end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    const auto line = text::trim(content.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != dataset_header())
        throw DataError(source + ":" + std::to_string(line_no) + ": unexpected header, expected '" +
                        dataset_header() + "'");
      header_seen = true;
      continue;
    }
    const auto fields = text::split(line);
    if (fields.size() != width)
      throw DataError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(width) +
                      " fields, found " + std::to_string(fields.size()));
    d.flight_id.emplace_back(text::trim(fields[0]));
    std::array<double, kNumFeatures + 2> nums{};
    for (std::size_t k = 1; k < width; ++k) {
      auto v = text::parse_double(fields[k]);
      if (!v || !std::isfinite(*v)) {
        const std::string col = k == 1 ? "t" : k == width - 1 ? "power" : std::string(kFeatureNames[k - 2]);
        throw DataError(source + ":" + std::to_string(line_no) + ": invalid value in column '" + col + "'");
      }
      nums[k - 1] = *v;
    }
    d.t.push_back(nums[0]);
    values.insert(values.end(), nums.begin() + 1, nums.begin() + 1 + kNumFeatures);
    d.y.push_back(nums[kNumFeatures + 1]);
  }
  if (!header_seen) throw DataError(source + ": empty dataset file");
  d.X = FeatureMatrix(d.y.size(), std::move(values));
  return d;
}

inline Dataset read_dataset(const std::string& path) { return parse_dataset(text::read_file(path), path); }

}  // namespace pcm::preprocess
