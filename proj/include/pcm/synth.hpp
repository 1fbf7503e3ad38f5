// Synthetic flight fleets with a component-model power oracle.
//
// Oracle: P = c0 + c1 * T^1.5 / sqrt(2 rho A) + c2 * |v - w|^3 with thrust
// T = m * |(a_n, a_e, g - a_d)| (NED, down positive, g = 9.81 m/s^2).
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "pcm/core.hpp"
#include "pcm/ingest.hpp"
#include "pcm/parallel.hpp"
#include "pcm/preprocess.hpp"

namespace pcm::synth {

using ingest::ChannelKind;
using ingest::RawChannel;

inline constexpr double kGravity = 9.81;

struct OraclePcm {
  double avionics_w = 20.0;      // c0
  double induced_scale = 1.5;    // c1
  double parasite_scale = 0.06;  // c2, W s^3 / m^3
  double air_density = 1.225;    // kg / m^3
  double disk_area_m2 = 0.342;   // total rotor disk area

  void validate() const {
    if (!(avionics_w > 0 && induced_scale > 0 && parasite_scale > 0 && air_density > 0 && disk_area_m2 > 0))
      throw ContractError("oracle coefficients must be positive");
  }
};

inline double thrust_n(const FlightSample& s) {
  return s.mass * std::sqrt(s.a[0] * s.a[0] + s.a[1] * s.a[1] + (kGravity - s.a[2]) * (kGravity - s.a[2]));
}

inline double oracle_power(const FlightSample& s, const OraclePcm& pcm) {
  const double T = thrust_n(s);
  const double induced = pcm.induced_scale * std::pow(T, 1.5) / std::sqrt(2.0 * pcm.air_density * pcm.disk_area_m2);
  const double rn = s.v[0] - s.wind[0], re = s.v[1] - s.wind[1], rd = s.v[2];
  const double air = std::sqrt(rn * rn + re * re + rd * rd);
  return pcm.avionics_w + induced + pcm.parasite_scale * air * air * air;
}

/// Fractions of flight time spent in each maneuver type.
struct ManeuverMix {
  double hover = 0.2;
  double cruise = 0.35;
  double climb = 0.15;
  double descent = 0.15;
  double turn = 0.15;
};

struct SynthConfig {
  std::size_t n_flights = 20;
  double min_duration_s = 200.0;
  double max_duration_s = 600.0;
  std::vector<double> mass_options_kg{3.68, 3.93, 4.18, 4.43};
  double min_wind_mps = 0.5;
  double max_wind_mps = 6.0;
  ManeuverMix mix;
  double noise_std_w = 10.0;
  std::uint64_t seed = 0;
  Aircraft aircraft = Aircraft::matrice100;
  double max_speed_mps = 15.0;
  double max_climb_mps = 4.0;
  double max_descent_mps = 3.0;
  OraclePcm pcm;
  std::string flight_prefix = "S";
  double power_floor_w = 20.0;

  void validate() const {
    if (n_flights == 0) throw ContractError("n_flights must be positive");
    if (!(min_duration_s >= 2.0 && max_duration_s >= min_duration_s))
      throw ContractError("duration range must satisfy 2 <= min <= max");
    if (mass_options_kg.empty()) throw ContractError("mass options must not be empty");
    for (double m : mass_options_kg)
      if (!(m > 0.0)) throw ContractError("mass options must be positive");
    if (!(min_wind_mps >= 0.0 && max_wind_mps >= min_wind_mps)) throw ContractError("invalid wind range");
    const double fr[] = {mix.hover, mix.cruise, mix.climb, mix.descent, mix.turn};
    double sum = 0.0;
    for (double f : fr) {
      if (f < 0.0) throw ContractError("maneuver fractions must be non-negative");
      sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ContractError("maneuver mix fractions must sum to 1");
    if (!(noise_std_w >= 0.0)) throw ContractError("noise std must be non-negative");
    if (!(max_speed_mps > 3.0 && max_climb_mps > 1.0 && max_descent_mps > 1.0))
      throw ContractError("speed limits too small");
    pcm.validate();
  }
};

/// Defaults scaled to each built-in airframe.
inline SynthConfig preset(Aircraft a) {
  SynthConfig cfg;
  cfg.aircraft = a;
  const auto& spec = ingest::aircraft_spec(a);
  cfg.mass_options_kg.clear();
  for (double p : spec.payload_options_g) cfg.mass_options_kg.push_back((spec.empty_weight_g + p) / 1000.0);
  cfg.max_speed_mps = std::min(spec.max_speed_mps, 15.0);
  cfg.max_climb_mps = spec.max_ascent_mps * 0.8;
  cfg.max_descent_mps = spec.max_descent_mps * 0.8;
  switch (a) {
    case Aircraft::mavic_pro:
      cfg.pcm.avionics_w = 8.0;
      cfg.pcm.disk_area_m2 = 0.139;
      cfg.pcm.parasite_scale = 0.012;
      cfg.noise_std_w = 3.0;
      cfg.flight_prefix = "MP";
      break;
    case Aircraft::inspire:
      cfg.pcm.avionics_w = 15.0;
      cfg.pcm.disk_area_m2 = 0.363;
      cfg.pcm.parasite_scale = 0.05;
      cfg.noise_std_w = 8.0;
      cfg.flight_prefix = "IN";
      break;
    default:
      cfg.flight_prefix = "M100";
      break;
  }
  return cfg;
}

namespace detail {

enum class Maneuver { hover, cruise, climb, descent, turn };

inline Maneuver draw_maneuver(const ManeuverMix& mix, Rng& rng) {
  const double u = uniform01(rng);
  double acc = mix.hover;
  if (u < acc) return Maneuver::hover;
  if (u < (acc += mix.cruise)) return Maneuver::cruise;
  if (u < (acc += mix.climb)) return Maneuver::climb;
  if (u < (acc += mix.descent)) return Maneuver::descent;
  return Maneuver::turn;
}

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

inline double wrap_pi(double a) { return std::remainder(a, 2.0 * std::numbers::pi); }

}  // namespace detail

/// One flight; `index` selects the per-flight seed stream.
inline Flight generate_flight(const SynthConfig& cfg, std::size_t index) {
  using detail::uniform;
  constexpr double pi = std::numbers::pi;
  Rng rng(derive_seed(cfg.seed, 0x5e7, index));
  const auto duration = static_cast<std::size_t>(
      std::floor(uniform(rng, cfg.min_duration_s, std::nextafter(cfg.max_duration_s + 1.0, 0.0))));
  const std::size_t n = std::max<std::size_t>(duration, 2);
  const double mass = cfg.mass_options_kg[uniform_index(rng, cfg.mass_options_kg.size())];
  const double wind_base = uniform(rng, cfg.min_wind_mps, cfg.max_wind_mps);
  const double wind_bearing = uniform(rng, 0.0, 360.0);
  const double wind_period = uniform(rng, 60.0, 180.0);
  const double wind_phase = uniform(rng, 0.0, 2.0 * pi);

  std::vector<double> t(n);
  std::array<std::vector<double>, 3> vel;
  for (auto& c : vel) c.resize(n);
  std::vector<double> yaw(n), wn(n), we(n);

  double heading = uniform(rng, -pi, pi);
  double yaw_c = heading;
  std::array<double, 3> v{0.0, 0.0, 0.0}, target{0.0, 0.0, 0.0};
  std::size_t seg_left = 0;
  detail::Maneuver kind = detail::Maneuver::hover;
  double speed = 0.0, turn_rate = 0.0;
  const double smooth = 1.0 - std::exp(-1.0 / 3.0);

  for (std::size_t k = 0; k < n; ++k) {
    t[k] = static_cast<double>(k);
    if (seg_left == 0) {
      kind = detail::draw_maneuver(cfg.mix, rng);
      seg_left = 10 + uniform_index(rng, 31);
      switch (kind) {
        case detail::Maneuver::hover: speed = 0.0; target[2] = 0.0; break;
        case detail::Maneuver::cruise:
          heading += uniform(rng, -pi / 2, pi / 2);
          speed = uniform(rng, 3.0, cfg.max_speed_mps);
          target[2] = 0.0;
          break;
        case detail::Maneuver::climb:
          speed = uniform(rng, 0.0, 2.0);
          target[2] = -uniform(rng, 1.0, cfg.max_climb_mps);
          break;
        case detail::Maneuver::descent:
          speed = uniform(rng, 0.0, 2.0);
          target[2] = uniform(rng, 1.0, cfg.max_descent_mps);
          break;
        case detail::Maneuver::turn:
          speed = uniform(rng, 3.0, 0.7 * cfg.max_speed_mps);
          turn_rate = uniform(rng, 5.0, 20.0) * pi / 180.0 * (uniform01(rng) < 0.5 ? -1.0 : 1.0);
          target[2] = 0.0;
          break;
      }
    }
    if (kind == detail::Maneuver::turn) heading += turn_rate;
    --seg_left;
    target[0] = speed * std::cos(heading);
    target[1] = speed * std::sin(heading);
    if (k > 0)
      for (int c = 0; c < 3; ++c) v[c] += (target[c] - v[c]) * smooth;
    for (int c = 0; c < 3; ++c) vel[c][k] = v[c];

    const double hs = std::hypot(v[0], v[1]);
    if (hs > 1.0) yaw_c += 0.3 * detail::wrap_pi(std::atan2(v[1], v[0]) - yaw_c);
    yaw[k] = yaw_c;

    const double ws = wind_base * (1.0 + 0.2 * std::sin(2.0 * pi * t[k] / wind_period + wind_phase));
    const double wb = wind_bearing + 15.0 * std::sin(2.0 * pi * t[k] / (1.7 * wind_period) + wind_phase);
    const auto w = preprocess::wind_components(ws, wb, true);
    wn[k] = w[0];
    we[k] = w[1];
  }

  std::array<std::vector<double>, 3> acc;
  for (int c = 0; c < 3; ++c) acc[c] = preprocess::differentiate(t, vel[c]);

  // Attitude tilts the thrust vector toward the required specific force,
  // including a quadratic drag share from the relative airflow.
  std::vector<double> roll(n), pitch(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double rn = vel[0][k] - wn[k], re = vel[1][k] - we[k];
    const double rs = std::hypot(rn, re);
    const double fn = acc[0][k] + 0.01 * rn * rs, fe = acc[1][k] + 0.01 * re * rs;
    const double up = kGravity - acc[2][k];
    const double c = std::cos(yaw[k]), s = std::sin(yaw[k]);
    const double fx = c * fn + s * fe, fy = -s * fn + c * fe;
    pitch[k] = std::atan2(-fx, up);
    roll[k] = std::atan2(fy * std::cos(pitch[k]), up);
  }
  const auto roll_rate = preprocess::differentiate(t, roll);
  const auto pitch_rate = preprocess::differentiate(t, pitch);
  const auto yaw_rate = preprocess::differentiate(t, yaw);

  const std::string id = cfg.flight_prefix + "-" + std::to_string(index);
  Flight flight(n);
  for (std::size_t k = 0; k < n; ++k) {
    auto& s = flight[k];
    s.t = t[k];
    s.mass = mass;
    s.v = {vel[0][k], vel[1][k], vel[2][k]};
    s.a = {acc[0][k], acc[1][k], acc[2][k]};
    s.euler = {roll[k], pitch[k], preprocess::wrap_angle(yaw[k])};
    s.euler_rate = {roll_rate[k], pitch_rate[k], yaw_rate[k]};
    s.wind = {wn[k], we[k]};
    s.flight_id = id;
    s.aircraft = cfg.aircraft;
    const double clean = oracle_power(s, cfg.pcm);
    // Truncated noise keeps every sample above the power floor.
    double p = clean;
    for (int attempt = 0; attempt < 64; ++attempt) {
      p = clean + cfg.noise_std_w * standard_normal(rng);
      if (p > cfg.power_floor_w) break;
      p = clean;
    }
    s.power = p;
  }
  return flight;
}

/// Seed-deterministic for any thread count.
inline std::vector<Flight> generate_fleet(const SynthConfig& cfg, unsigned threads = 1) {
  cfg.validate();
  std::vector<Flight> fleet(cfg.n_flights);
  parallel_for(cfg.n_flights, threads, [&](std::size_t i) { fleet[i] = generate_flight(cfg, i); });
  return fleet;
}

inline Dataset to_dataset(const std::vector<Flight>& fleet) {
  std::vector<Dataset> parts;
  parts.reserve(fleet.size());
  for (const auto& f : fleet)
    if (!f.empty()) parts.push_back(preprocess::to_feature_matrix(f));
  return concat(parts);
}

/// Convenience: a fleet with at least `min_samples` rows in total.
inline Dataset generate_dataset(SynthConfig cfg, std::size_t min_samples, unsigned threads = 1) {
  const double mean_len = 0.5 * (cfg.min_duration_s + cfg.max_duration_s);
  cfg.n_flights = std::max<std::size_t>(
      cfg.n_flights, static_cast<std::size_t>(std::ceil(1.3 * static_cast<double>(min_samples) / mean_len)) + 1);
  for (;;) {
    auto d = to_dataset(generate_fleet(cfg, threads));
    if (d.size() >= min_samples) return d;
    cfg.n_flights *= 2;
  }
}

inline constexpr double kRawLogVoltage = 22.2;

/// Renders a 1 Hz Matrice-100 flight as a raw log: kinematic and wind rows at
/// 10 Hz and battery rows at 5 Hz, each holding the sample's value for its
/// whole second. Preprocessing the log recovers the flight up to rounding.
inline ingest::FlightLog to_raw_log(const Flight& flight) {
  if (flight.empty()) throw ContractError("cannot write an empty flight");
  const auto& spec = ingest::aircraft_spec(Aircraft::matrice100);
  const double payload_raw = flight.front().mass * 1000.0 - spec.empty_weight_g;
  double payload = spec.payload_options_g.front();
  for (double p : spec.payload_options_g)
    if (std::abs(p - payload_raw) < std::abs(payload - payload_raw)) payload = p;
  if (std::abs(payload - payload_raw) > 1e-6)
    throw ContractError("flight mass does not match a Matrice 100 payload option");

  ingest::FlightLog log;
  log.schema = ingest::Schema::matrice100;
  log.flight_id = flight.front().flight_id;
  log.payload_g = payload;
  log.aircraft = spec;
  const auto dict = ingest::column_dictionary(log.schema);
  auto channel = [&](ChannelKind kind, double rate) {
    RawChannel c;
    c.kind = kind;
    c.rate_hz = rate;
    for (const auto& s : dict)
      if (s.kind == kind) c.columns = s.columns;
    c.values.assign(c.columns.size(), {});
    return c;
  };
  auto ks = channel(ChannelKind::kinematic_state, 10.0);
  auto wind = channel(ChannelKind::wind, 10.0);
  auto bat = channel(ChannelKind::battery, 5.0);
  for (std::size_t i = 0; i < flight.size(); ++i) {
    const auto& s = flight[i];
    if (i > 0 && !(s.t >= flight[i - 1].t + 1.0)) throw ContractError("raw log needs samples at least 1 s apart");
    const std::array<double, 12> kin{s.v[0],     s.v[1],     s.v[2],     s.a[0],          s.a[1],
                                     s.a[2],     s.euler[0], s.euler[1], s.euler[2],      s.euler_rate[0],
                                     s.euler_rate[1], s.euler_rate[2]};
    const double ws = std::hypot(s.wind[0], s.wind[1]);
    const double wd = ws > 0.0 ? std::atan2(-s.wind[1], -s.wind[0]) * 180.0 / std::numbers::pi : 0.0;
    for (int j = 0; j < 10; ++j) {
      const double tj = s.t + 0.1 * j;
      ks.t.push_back(tj);
      for (std::size_t c = 0; c < kin.size(); ++c) ks.values[c].push_back(kin[c]);
      wind.t.push_back(tj);
      wind.values[0].push_back(ws);
      wind.values[1].push_back(wd);
      if (j % 2 == 0) {
        bat.t.push_back(tj);
        bat.values[0].push_back(kRawLogVoltage);
        bat.values[1].push_back(s.power / kRawLogVoltage);
      }
    }
  }
  bat.columns.push_back("power");
  bat.values.emplace_back();
  for (std::size_t i = 0; i < bat.t.size(); ++i) bat.values[2].push_back(bat.values[0][i] * bat.values[1][i]);
  for (auto* c : {&ks, &wind, &bat}) c->rate_hz = ingest::detail::measured_rate(c->t);
  log.channels = {std::move(ks), std::move(wind), std::move(bat)};
  return log;
}

}  // namespace pcm::synth
