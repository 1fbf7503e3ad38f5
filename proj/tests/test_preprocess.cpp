#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pcm/preprocess.hpp"
#include "pcm/synth.hpp"
#include "support.hpp"

using namespace pcm;
using namespace pcm::preprocess;

TEST(MedianFilter, RemovesSingleSpike) {
  const std::vector<double> x{1, 100, 1, 1, 1};
  const auto y = median_filter(x, 3);
  EXPECT_EQ(y[1], 1.0);
  EXPECT_EQ(y[2], 1.0);
  EXPECT_EQ(y[3], 1.0);
}

TEST(MedianFilter, ConstantUnchanged) {
  const std::vector<double> x(9, 4.5);
  EXPECT_EQ(median_filter(x, 5), x);
}

TEST(MedianFilter, CenterOfFive) {
  const std::vector<double> x{5, 1, 3, 2, 4};
  std::vector<double> sorted = x;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(median_filter(x, 5)[2], sorted[2]);
}

TEST(MedianFilter, EdgesShrinkSymmetrically) {
  const std::vector<double> x{9, 1, 5, 7, 3};
  const auto y = median_filter(x, 5);
  EXPECT_EQ(y[0], 9.0);  // window of one
  EXPECT_EQ(y[1], 5.0);  // median of {9, 1, 5}
  EXPECT_EQ(y[4], 3.0);
}

TEST(MedianFilter, Errors) {
  const std::vector<double> x{1, 2, 3, 4};
  EXPECT_THROW(median_filter(x, 2), ContractError);
  EXPECT_THROW(median_filter(x, 5), ContractError);
}

// Property: every output lies within [min, max] of its input window.
TEST(MedianFilter, StaysInsideWindowRange) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int w = 1 + 2 * static_cast<int>(uniform_index(rng, 5));
    const std::size_t n = static_cast<std::size_t>(w) + uniform_index(rng, 50);
    std::vector<double> x(n);
    for (auto& v : x) v = standard_normal(rng) * 10.0;
    const auto y = median_filter(x, w);
    ASSERT_EQ(y.size(), n);
    const std::size_t h = static_cast<std::size_t>(w / 2);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = std::min({h, i, n - 1 - i});
      const auto [lo, hi] = std::minmax_element(x.begin() + static_cast<long>(i - r), x.begin() + static_cast<long>(i + r + 1));
      EXPECT_GE(y[i], *lo);
      EXPECT_LE(y[i], *hi);
    }
  }
}

TEST(Differentiate, Examples) {
  const std::vector<double> t{0, 1, 2};
  EXPECT_EQ(differentiate(t, std::vector<double>{0, 1, 2}), (std::vector<double>{1, 1, 1}));
  EXPECT_EQ(differentiate(t, std::vector<double>{0, 0, 0}), (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(differentiate(t, std::vector<double>{0, 1, 4})[1], 2.0);
}

TEST(Differentiate, Errors) {
  EXPECT_THROW(differentiate(std::vector<double>{0, 1, 1}, std::vector<double>{0, 1, 2}), DataError);
  EXPECT_THROW(differentiate(std::vector<double>{0}, std::vector<double>{0}), ContractError);
  EXPECT_THROW(differentiate(std::vector<double>{0, 1}, std::vector<double>{0}), ContractError);
}

// Property: trapezoid integration of the derivative of a linear series
// recovers its endpoints on irregular grids.
TEST(Differentiate, IntegratesBackOnLinearSeries) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 60);
    std::vector<double> t(n), x(n);
    const double a = standard_normal(rng) * 5, b = standard_normal(rng) * 5;
    double tt = uniform01(rng);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = tt;
      x[i] = a + b * tt;
      tt += 0.05 + uniform01(rng);
    }
    const auto d = differentiate(t, x);
    double acc = x[0];
    for (std::size_t i = 1; i < n; ++i) acc += 0.5 * (d[i] + d[i - 1]) * (t[i] - t[i - 1]);
    EXPECT_NEAR(acc, x[n - 1], 1e-9 * std::max(1.0, std::abs(x[n - 1])));
  }
}

TEST(Angles, UnwrapAndWrap) {
  const double pi = std::numbers::pi;
  const std::vector<double> a{3.0, -3.0, -2.9, 3.1};
  const auto u = unwrap(a);
  EXPECT_NEAR(u[1], -3.0 + 2 * pi, 1e-12);
  EXPECT_NEAR(u[3], 3.1, 1e-12);
  for (std::size_t i = 1; i < u.size(); ++i) EXPECT_LE(std::abs(u[i] - u[i - 1]), pi);
  EXPECT_EQ(wrap_angle(1.25), 1.25);
  EXPECT_NEAR(wrap_angle(3 * pi / 2), -pi / 2, 1e-12);
  EXPECT_NEAR(wrap_angle(-3 * pi / 2), pi / 2, 1e-12);
}

TEST(Wind, FromBearingConvention) {
  // Wind from the north blows toward the south.
  auto w = wind_components(5.0, 0.0);
  EXPECT_NEAR(w[0], -5.0, 1e-12);
  EXPECT_NEAR(w[1], 0.0, 1e-12);
  w = wind_components(5.0, 90.0);
  EXPECT_NEAR(w[1], -5.0, 1e-12);
  w = wind_components(5.0, 90.0, false);
  EXPECT_NEAR(w[1], 5.0, 1e-12);
}

namespace {

ingest::RawChannel channel(std::vector<std::string> cols, std::vector<double> t, double value) {
  ingest::RawChannel c;
  c.columns = std::move(cols);
  c.t = std::move(t);
  for (std::size_t k = 0; k < c.columns.size(); ++k) c.values.emplace_back(c.t.size(), value);
  return c;
}

std::vector<std::string> kinematic_cols() {
  auto all = canonical_columns();
  return {all.begin(), all.begin() + 12};
}

}  // namespace

TEST(Align, TenHertzFiveSeconds) {
  std::vector<double> t;
  for (int i = 0; i < 50; ++i) t.push_back(0.1 * i);
  auto kin = channel(kinematic_cols(), t, 0.0);
  for (int i = 0; i < 50; ++i) kin.values[0][static_cast<std::size_t>(i)] = i;  // v_n ramp
  auto bat = channel({"power"}, {0, 1, 2, 3, 4}, 100.0);
  const std::vector<ingest::RawChannel> chans{kin, bat};
  const auto s = align_1hz(chans, {2.0, "A", Aircraft::matrice100});
  ASSERT_EQ(s.size(), 5u);
  for (int k = 0; k < 5; ++k) {
    EXPECT_DOUBLE_EQ(s[k].v[0], 10.0 * k + 4.5);  // mean of 10 raw values
    EXPECT_EQ(s[k].power, 100.0);                  // 1 Hz passes through
    EXPECT_EQ(s[k].t, k);
    EXPECT_EQ(s[k].mass, 2.0);
    EXPECT_EQ(s[k].wind[0], 0.0);
  }
}

TEST(Align, GapDropsSeconds) {
  std::vector<double> t;
  for (int i = 0; i < 60; ++i)
    if (i < 20 || i >= 40) t.push_back(0.1 * i);
  const std::vector<ingest::RawChannel> chans{channel(kinematic_cols(), t, 1.0),
                                              channel({"power"}, {0, 1, 2, 3, 4, 5}, 50.0)};
  const auto s = align_1hz(chans, {});
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(s[1].t, 1.0);
  EXPECT_EQ(s[2].t, 4.0);
}

TEST(Align, Errors) {
  const std::vector<ingest::RawChannel> disjoint{channel(kinematic_cols(), {0, 1, 2}, 1.0),
                                                 channel({"power"}, {5, 6}, 50.0)};
  EXPECT_THROW(align_1hz(disjoint, {}), DataError);
  const std::vector<ingest::RawChannel> missing{channel(kinematic_cols(), {0, 1, 2}, 1.0)};
  EXPECT_THROW(align_1hz(missing, {}), DataError);
}

// Property: aligning already-aligned samples reproduces them exactly.
TEST(Align, IdempotentOnAlignedSamples) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto cfg = synth::preset(Aircraft::matrice100);
    cfg.n_flights = 3;
    cfg.min_duration_s = 30;
    cfg.max_duration_s = 90;
    cfg.seed = seed;
    for (const auto& f : synth::generate_fleet(cfg)) {
      const auto chans = samples_to_channels(f);
      const auto again = align_1hz(chans, {f.front().mass, f.front().flight_id, f.front().aircraft});
      ASSERT_EQ(again, f);
    }
  }
}

TEST(PowerFloor, Examples) {
  Flight f(4);
  const double p[] = {5, 25, 19.9, 300};
  for (int i = 0; i < 4; ++i) f[i].power = p[i];
  const auto r = apply_power_floor(f);
  ASSERT_EQ(r.samples.size(), 2u);
  EXPECT_EQ(r.samples[0].power, 25.0);
  EXPECT_EQ(r.samples[1].power, 300.0);
  EXPECT_EQ(r.removed, 2u);

  Flight idle(3);
  for (auto& s : idle) s.power = 12.0;
  const auto e = apply_power_floor(idle);
  EXPECT_TRUE(e.samples.empty());
  EXPECT_EQ(e.removed, 3u);

  Flight air(3);
  for (auto& s : air) s.power = 200.0;
  EXPECT_EQ(apply_power_floor(air).samples, air);
}

TEST(FeatureMatrix, FromSamples) {
  Flight f(3);
  f[1].mass = 3.68;
  f[2].mass = 1;
  f[2].v = {1, 2, 3};
  f[2].wind = {7, 8};
  f[2].power = 42;
  const auto d = to_feature_matrix(f);
  ASSERT_EQ(d.X.rows(), 3u);
  ASSERT_EQ(d.y.size(), 3u);
  EXPECT_EQ(d.X(1, 0), 3.68);
  for (std::size_t j = 1; j < kNumFeatures; ++j) EXPECT_EQ(d.X(1, j), 0.0);
  const auto expect = f[2].features();
  for (std::size_t j = 0; j < kNumFeatures; ++j) EXPECT_EQ(d.X(2, j), expect[j]);
  EXPECT_EQ(d.y[2], 42.0);
}

TEST(FeatureMatrix, NonFiniteNamesIndexAndField) {
  Flight f(2);
  f[1].a[2] = INFINITY;
  try {
    to_feature_matrix(f);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("sample 1"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("a_d"), std::string::npos);
  }
  EXPECT_THROW(to_feature_matrix(Flight{}), ContractError);
}

TEST(Heatmap, Properties) {
  auto d = test::random_dataset(200, 3);
  for (std::size_t i = 0; i < d.size(); ++i) d.X(i, 5) = -d.X(i, 4);
  for (std::size_t i = 0; i < d.size(); ++i) d.X(i, 14) = 1.0;  // constant
  const auto r = correlation_heatmap(d.X, d.y);
  ASSERT_EQ(r.size(), 16u);
  EXPECT_NEAR(r[4][5], -1.0, 1e-12);
  EXPECT_TRUE(std::isnan(r[14][14]));
  EXPECT_TRUE(std::isnan(r[3][14]));
  for (std::size_t a = 0; a < 16; ++a) {
    if (a == 14) continue;
    EXPECT_EQ(r[a][a], 1.0);
    for (std::size_t b = 0; b < 16; ++b) {
      if (b == 14) continue;
      EXPECT_EQ(r[a][b], r[b][a]);
      EXPECT_LE(std::abs(r[a][b]), 1.0);
    }
  }
  EXPECT_THROW(correlation_heatmap(test::random_dataset(2, 1).X, std::vector<double>{1, 2}), ContractError);
}

TEST(Heatmap, DownwardAccelerationLowersPower) {
  const auto d = test::fleet_dataset(10, 4);
  const auto r = correlation_heatmap(d.X, d.y);
  EXPECT_LT(r[6][15], 0.0);
}

TEST(DatasetFile, RoundTrip) {
  auto d = test::fleet_dataset(3, 9, 20, 40);
  const auto text = format_dataset(d);
  const auto back = parse_dataset(text);
  EXPECT_EQ(back.X, d.X);
  EXPECT_EQ(back.y, d.y);
  EXPECT_EQ(back.flight_id, d.flight_id);
  EXPECT_EQ(back.t, d.t);
  EXPECT_EQ(format_dataset(back), text);
  EXPECT_EQ(text.substr(0, text.find('\n')).size(), dataset_header().size());
}

TEST(DatasetFile, Errors) {
  EXPECT_THROW(parse_dataset(""), DataError);
  EXPECT_THROW(parse_dataset("a,b,c\n"), DataError);
  EXPECT_THROW(parse_dataset(dataset_header() + "\nF,1,2\n"), DataError);
  std::string row = "F,0";
  for (int i = 0; i < 15; ++i) row += ",1";
  EXPECT_NO_THROW(parse_dataset(dataset_header() + "\n" + row + ",5\n"));
  EXPECT_THROW(parse_dataset(dataset_header() + "\n" + row + ",x\n"), DataError);
}

TEST(Pipeline, MatriceRawLogRecoversFlight) {
  auto cfg = synth::preset(Aircraft::matrice100);
  cfg.n_flights = 2;
  cfg.min_duration_s = 40;
  cfg.max_duration_s = 80;
  for (const auto& f : synth::generate_fleet(cfg)) {
    const auto log = ingest::parse_log_text(ingest::write_log(synth::to_raw_log(f)), ingest::Schema::matrice100);
    const auto r = preprocess_log(log);
    ASSERT_EQ(r.samples.size(), f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
      const auto a = f[i].features(), b = r.samples[i].features();
      for (std::size_t j = 0; j < kNumFeatures; ++j) EXPECT_NEAR(a[j], b[j], 1e-9 * (1 + std::abs(a[j])));
      EXPECT_NEAR(f[i].power, r.samples[i].power, 1e-9 * f[i].power);
    }
  }
}

TEST(Pipeline, GpsSchemaDerivesVelocity) {
  // Straight northward flight at 2 m/s, sampled at 5 Hz GPS and 200 Hz IMU.
  ingest::FlightLog log;
  log.schema = ingest::Schema::mavic_pro;
  log.aircraft = ingest::aircraft_spec(Aircraft::mavic_pro);
  log.flight_id = "G";
  const double k = std::numbers::pi / 180.0 * kEarthRadiusM;
  ingest::RawChannel gps{ingest::ChannelKind::gps_position, 5.0, {}, {"latitude", "longitude", "altitude"}, {{}, {}, {}}};
  for (int i = 0; i < 50; ++i) {
    const double t = 0.2 * i;
    gps.t.push_back(t);
    gps.values[0].push_back(45.0 + 2.0 * t / k);
    gps.values[1].push_back(7.0);
    gps.values[2].push_back(100.0);
  }
  ingest::RawChannel imu{ingest::ChannelKind::imu, 200.0, {}, {"roll", "pitch", "yaw"}, {{}, {}, {}}};
  for (int i = 0; i < 2000; ++i) {
    imu.t.push_back(0.005 * i);
    imu.values[0].push_back(0.0);
    imu.values[1].push_back(-0.1);
    imu.values[2].push_back(0.0);
  }
  ingest::RawChannel bat{ingest::ChannelKind::battery, 1.0, {}, {"voltage", "current", "power"}, {{}, {}, {}}};
  for (int i = 0; i < 10; ++i) {
    bat.t.push_back(i);
    bat.values[0].push_back(15.0);
    bat.values[1].push_back(8.0);
    bat.values[2].push_back(120.0);
  }
  log.channels = {gps, imu, bat};
  const auto r = preprocess_log(log);
  ASSERT_EQ(r.samples.size(), 10u);
  for (const auto& s : r.samples) {
    EXPECT_NEAR(s.v[0], 2.0, 1e-6);
    EXPECT_NEAR(s.v[1], 0.0, 1e-9);
    EXPECT_NEAR(s.a[0], 0.0, 1e-6);
    EXPECT_NEAR(s.euler[1], -0.1, 1e-12);
    EXPECT_EQ(s.power, 120.0);
    EXPECT_DOUBLE_EQ(s.mass, 0.734);
  }
}
