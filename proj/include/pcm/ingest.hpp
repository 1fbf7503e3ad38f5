// Flight-log parsing for the three supported schema dialects.
//
// A log is comma-separated text:
//
//   #schema,matrice100              metadata lines start with '#'
//   #flight_id,F0001
//   #payload_g,250
//   #rate,battery,5                 optional declared channel rate (Hz)
//   @battery,t,voltage,current      '@' declares a channel's header row
//   battery,0.0,22.2,10.0           data rows start with the channel name
//
// Column dictionaries (t in seconds since flight start, angles in rad,
// wind direction in degrees clockwise from north):
//
//   matrice100           kinematic_state: t v_n v_e v_d a_n a_e a_d roll pitch yaw
//                                         roll_rate pitch_rate yaw_rate
//                        battery:         t voltage current
//                        wind (optional): t wind_speed wind_direction
//   mavic_pro, inspire   gps_position:    t latitude longitude altitude
//                        imu:             t roll pitch yaw
//                        battery:         t voltage current
//                        wind (optional): t wind_speed wind_direction
//
// Columns beyond the dictionary are ignored. The battery channel gains a
// derived `power` column (voltage * current, W).
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pcm/core.hpp"
#include "pcm/text.hpp"

namespace pcm::ingest {

enum class Schema { mavic_pro, inspire, matrice100 };

inline std::string_view to_string(Schema s) {
  switch (s) {
    case Schema::mavic_pro: return "mavic_pro";
    case Schema::inspire: return "inspire";
    case Schema::matrice100: return "matrice100";
  }
  return "?";
}

inline Schema schema_from_string(std::string_view s) {
  if (s == "mavic_pro") return Schema::mavic_pro;
  if (s == "inspire") return Schema::inspire;
  if (s == "matrice100") return Schema::matrice100;
  throw DataError("unknown schema '" + std::string(s) + "' (expected mavic_pro, inspire or matrice100)");
}

enum class ChannelKind { gps_position, imu, wind, battery, kinematic_state };

inline std::string_view to_string(ChannelKind k) {
  switch (k) {
    case ChannelKind::gps_position: return "gps_position";
    case ChannelKind::imu: return "imu";
    case ChannelKind::wind: return "wind";
    case ChannelKind::battery: return "battery";
    case ChannelKind::kinematic_state: return "kinematic_state";
  }
  return "?";
}

inline std::optional<ChannelKind> channel_from_string(std::string_view s) {
  for (auto k : {ChannelKind::gps_position, ChannelKind::imu, ChannelKind::wind, ChannelKind::battery,
                 ChannelKind::kinematic_state})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

/// One sensor stream at its native rate; values are stored column-wise.
struct RawChannel {
  ChannelKind kind = ChannelKind::battery;
  double rate_hz = 0.0;
  std::vector<double> t;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> values;  // values[c][i]

  std::size_t size() const { return t.size(); }

  const std::vector<double>& column(std::string_view name) const {
    for (std::size_t c = 0; c < columns.size(); ++c)
      if (columns[c] == name) return values[c];
    throw ContractError("channel " + std::string(to_string(kind)) + " has no column '" + std::string(name) + "'");
  }

  bool has_column(std::string_view name) const {
    return std::find(columns.begin(), columns.end(), name) != columns.end();
  }

  bool operator==(const RawChannel&) const = default;
};

struct AircraftSpec {
  std::string name;
  Aircraft aircraft = Aircraft::unknown;
  double empty_weight_g = 0.0;
  std::vector<double> payload_options_g;
  double max_speed_mps = 0.0;
  double max_ascent_mps = 0.0;
  double max_descent_mps = 0.0;
  double max_flight_time_min = 0.0;

  bool operator==(const AircraftSpec&) const = default;
};

inline std::vector<AircraftSpec> builtin_aircraft() {
  return {
      {"Mavic Pro", Aircraft::mavic_pro, 734.0, {0.0}, 18.0, 5.0, 3.0, 27.0},
      {"Inspire", Aircraft::inspire, 2845.0, {0.0}, 22.0, 5.0, 4.0, 18.0},
      {"Matrice 100", Aircraft::matrice100, 3680.0, {0.0, 250.0, 500.0, 750.0}, 22.0, 5.0, 4.0, 22.0},
  };
}

inline const AircraftSpec& aircraft_spec(Aircraft a) {
  static const auto specs = builtin_aircraft();
  for (const auto& s : specs)
    if (s.aircraft == a) return s;
  throw ContractError("no built-in specification for aircraft '" + std::string(pcm::to_string(a)) + "'");
}

inline const AircraftSpec& aircraft_spec(std::string_view name) {
  static const auto specs = builtin_aircraft();
  for (const auto& s : specs)
    if (s.name == name) return s;
  throw ContractError("no built-in specification for aircraft '" + std::string(name) + "'");
}

inline Aircraft aircraft_of(Schema s) {
  switch (s) {
    case Schema::mavic_pro: return Aircraft::mavic_pro;
    case Schema::inspire: return Aircraft::inspire;
    case Schema::matrice100: return Aircraft::matrice100;
  }
  return Aircraft::unknown;
}

struct ChannelSpec {
  ChannelKind kind;
  std::vector<std::string> columns;  // excluding t
  bool mandatory;
  double nominal_rate_hz;
};

inline std::vector<ChannelSpec> column_dictionary(Schema s) {
  const std::vector<std::string> battery{"voltage", "current"};
  const std::vector<std::string> wind{"wind_speed", "wind_direction"};
  if (s == Schema::matrice100)
    return {{ChannelKind::kinematic_state,
             {"v_n", "v_e", "v_d", "a_n", "a_e", "a_d", "roll", "pitch", "yaw", "roll_rate", "pitch_rate",
              "yaw_rate"},
             true,
             10.0},
            {ChannelKind::wind, wind, false, 10.0},
            {ChannelKind::battery, battery, true, 5.0}};
  return {{ChannelKind::gps_position, {"latitude", "longitude", "altitude"}, true, 5.0},
          {ChannelKind::imu, {"roll", "pitch", "yaw"}, true, 200.0},
          {ChannelKind::wind, wind, false, 5.0},
          {ChannelKind::battery, battery, true, 1.0}};
}

struct FlightLog {
  Schema schema = Schema::matrice100;
  std::string flight_id;
  double payload_g = 0.0;
  AircraftSpec aircraft;
  std::vector<RawChannel> channels;

  double mass_kg() const { return (aircraft.empty_weight_g + payload_g) / 1000.0; }

  const RawChannel* find(ChannelKind k) const {
    for (const auto& c : channels)
      if (c.kind == k) return &c;
    return nullptr;
  }

  bool operator==(const FlightLog&) const = default;
};

namespace detail {

inline double measured_rate(const std::vector<double>& t) {
  if (t.size() < 2 || !(t.back() > t.front())) return 0.0;
  return static_cast<double>(t.size() - 1) / (t.back() - t.front());
}

inline bool within_20pct(double a, double nominal) { return std::abs(a - nominal) <= 0.2 * nominal; }

}  // namespace detail

/// Parses a log held in memory. `source` names it in error messages.
inline FlightLog parse_log_text(std::string_view content, Schema schema, const std::string& source = "<log>") {
  auto fail = [&](std::size_t line, const std::string& msg) -> DataError {
    return DataError(source + (line ? ":" + std::to_string(line) : std::string()) + ": " + msg);
  };
  FlightLog log;
  log.schema = schema;
  log.aircraft = aircraft_spec(aircraft_of(schema));
  const auto dict = column_dictionary(schema);

  struct Pending {
    const ChannelSpec* spec = nullptr;
    std::vector<std::size_t> source_index;  // dictionary column -> position in row
    std::size_t width = 0;
    RawChannel channel;
    std::size_t last_line = 0;
  };
  std::map<ChannelKind, Pending> pending;
  std::vector<ChannelKind> declared_order;
  std::map<ChannelKind, double> declared_rate;
  std::optional<std::string> declared_schema;

  std::size_t line_no = 0, data_rows = 0;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    auto end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    const std::string_view line = text::trim(content.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) {
      if (end == content.size()) break;
      continue;
    }
    const auto fields = text::split(line);
    if (line.front() == '#') {
      const auto key = text::trim(fields[0].substr(1));
      if (key == "schema" && fields.size() >= 2) {
        declared_schema = std::string(text::trim(fields[1]));
      } else if (key == "flight_id" && fields.size() >= 2) {
        log.flight_id = std::string(text::trim(fields[1]));
      } else if (key == "payload_g" && fields.size() >= 2) {
        auto v = text::parse_double(fields[1]);
        if (!v || *v < 0.0) throw fail(line_no, "invalid payload_g");
        log.payload_g = *v;
      } else if (key == "rate" && fields.size() >= 3) {
        auto k = channel_from_string(text::trim(fields[1]));
        auto v = text::parse_double(fields[2]);
        if (!k || !v || *v <= 0.0) throw fail(line_no, "invalid rate declaration");
        declared_rate[*k] = *v;
      }
      continue;
    }
    if (line.front() == '@') {
      const auto name = text::trim(fields[0].substr(1));
      const auto kind = channel_from_string(name);
      if (!kind) throw fail(line_no, "unknown channel '" + std::string(name) + "'");
      const auto it = std::find_if(dict.begin(), dict.end(), [&](const ChannelSpec& s) { return s.kind == *kind; });
      if (it == dict.end())
        throw fail(line_no, "channel '" + std::string(name) + "' is not part of schema " +
                                std::string(to_string(schema)));
      if (pending.count(*kind)) throw fail(line_no, "channel '" + std::string(name) + "' declared twice");
      Pending p;
      p.spec = &*it;
      p.width = fields.size();
      std::vector<std::string_view> header(fields.begin() + 1, fields.end());
      for (auto& h : header) h = text::trim(h);
      auto find_col = [&](std::string_view col) -> std::size_t {
        const auto hit = std::find(header.begin(), header.end(), col);
        if (hit == header.end())
          throw fail(line_no, "channel '" + std::string(name) + "' is missing mandatory column '" +
                                  std::string(col) + "'");
        return static_cast<std::size_t>(hit - header.begin()) + 1;
      };
      p.source_index.push_back(find_col("t"));
      for (const auto& col : it->columns) p.source_index.push_back(find_col(col));
      p.channel.kind = *kind;
      p.channel.columns = it->columns;
      p.channel.values.resize(it->columns.size());
      pending.emplace(*kind, std::move(p));
      declared_order.push_back(*kind);
      continue;
    }
    const auto kind = channel_from_string(text::trim(fields[0]));
    if (!kind || !pending.count(*kind))
      throw fail(line_no, "row for undeclared channel '" + std::string(text::trim(fields[0])) + "'");
    auto& p = pending.at(*kind);
    if (fields.size() != p.width)
      throw fail(line_no, "expected " + std::to_string(p.width) + " fields, found " + std::to_string(fields.size()));
    std::vector<double> row;
    for (std::size_t c = 0; c < p.source_index.size(); ++c) {
      auto v = text::parse_double(fields[p.source_index[c]]);
      if (!v || !std::isfinite(*v))
        throw fail(line_no, "invalid number in column '" + (c == 0 ? std::string("t") : p.spec->columns[c - 1]) + "'");
      row.push_back(*v);
    }
    auto& ch = p.channel;
    if (!ch.t.empty() && row[0] < ch.t.back())
      throw fail(line_no, "non-monotone timestamp in channel '" + std::string(to_string(*kind)) + "' (row " +
                              std::to_string(ch.t.size() + 1) + " of the channel)");
    ch.t.push_back(row[0]);
    for (std::size_t c = 1; c < row.size(); ++c) ch.values[c - 1].push_back(row[c]);
    ++data_rows;
  }

  if (content.empty() || (pending.empty() && data_rows == 0)) throw fail(0, "empty log");
  if (!declared_schema) throw fail(0, "log does not declare a schema");
  if (schema_from_string(*declared_schema) != schema)
    throw fail(0, "log declares schema '" + *declared_schema + "' but " + std::string(to_string(schema)) +
                      " was requested");
  for (const auto& spec : dict) {
    if (spec.mandatory && !pending.count(spec.kind))
      throw fail(0, "missing mandatory channel '" + std::string(to_string(spec.kind)) + "'");
  }
  const auto& options = log.aircraft.payload_options_g;
  if (std::find(options.begin(), options.end(), log.payload_g) == options.end())
    throw fail(0, "payload " + text::format_double(log.payload_g) + " g is not an option for " + log.aircraft.name);
  if (log.flight_id.empty()) log.flight_id = source;

  for (ChannelKind k : declared_order) {
    auto& p = pending.at(k);
    auto& ch = p.channel;
    if (ch.t.empty()) throw fail(0, "channel '" + std::string(to_string(k)) + "' has no rows");
    ch.rate_hz = detail::measured_rate(ch.t);
    if (auto r = declared_rate.find(k); r != declared_rate.end()) {
      if (!detail::within_20pct(r->second, p.spec->nominal_rate_hz))
        throw fail(0, "declared rate of '" + std::string(to_string(k)) + "' deviates more than 20% from nominal " +
                          text::format_double(p.spec->nominal_rate_hz) + " Hz");
      if (ch.rate_hz > 0.0 && !detail::within_20pct(ch.rate_hz, r->second))
        throw fail(0, "measured rate of '" + std::string(to_string(k)) + "' deviates more than 20% from declared");
    }
    if (k == ChannelKind::battery) {
      std::vector<double> power(ch.t.size());
      for (std::size_t i = 0; i < power.size(); ++i) power[i] = ch.values[0][i] * ch.values[1][i];
      ch.columns.push_back("power");
      ch.values.push_back(std::move(power));
    }
    log.channels.push_back(std::move(ch));
  }
  return log;
}

inline FlightLog parse_log(const std::string& path, Schema schema) {
  return parse_log_text(text::read_file(path), schema, path);
}

/// Renders a log in its schema dialect; parse_log_text(write_log(x)) == x.
inline std::string write_log(const FlightLog& log) {
  std::string out;
  out += "#schema," + std::string(to_string(log.schema)) + "\n";
  out += "#flight_id," + log.flight_id + "\n";
  out += "#payload_g," + text::format_double(log.payload_g) + "\n";
  for (const auto& ch : log.channels) {
    out += "@" + std::string(to_string(ch.kind)) + ",t";
    const std::size_t ncols = ch.kind == ChannelKind::battery ? 2 : ch.columns.size();
    for (std::size_t c = 0; c < ncols; ++c) out += "," + ch.columns[c];
    out += "\n";
  }
  for (const auto& ch : log.channels) {
    const std::size_t ncols = ch.kind == ChannelKind::battery ? 2 : ch.columns.size();
    const std::string name(to_string(ch.kind));
    for (std::size_t i = 0; i < ch.size(); ++i) {
      out += name;
      out += ',';
      out += text::format_double(ch.t[i]);
      for (std::size_t c = 0; c < ncols; ++c) {
        out += ',';
        out += text::format_double(ch.values[c][i]);
      }
      out += '\n';
    }
  }
  return out;
}

}  // namespace pcm::ingest
