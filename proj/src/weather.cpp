#include "flightsense/weather.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "flightsense/csv.hpp"
#include "flightsense/error.hpp"

namespace flightsense {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::vector<WeatherObservation> load_observations(std::istream& in, WeatherLoadStats* stats) {
  csv::Reader reader(in);
  std::vector<std::string> row;
  WeatherLoadStats local;
  if (!reader.next(row)) {
    if (stats) *stats = local;
    return {};
  }
  const auto idx =
      csv::locate_columns(row, {"STATION", "DATE", "AWND", "PRCP", "SNOW", "TMAX", "TMIN"});
  const char* names[] = {"STATION", "DATE", "AWND", "PRCP", "SNOW", "TMAX", "TMIN"};
  for (std::size_t i = 0; i < idx.size(); ++i)
    if (!idx[i])
      throw Error(ErrorCode::schema, std::string("weather file missing column '") + names[i] + "'");

  std::map<std::pair<std::string, long>, WeatherObservation> by_key;
  while (reader.next(row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    ++local.rows;
    auto cell = [&](int i) -> const std::string& {
      static const std::string empty;
      return *idx[i] < row.size() ? row[*idx[i]] : empty;
    };
    const auto date = parse_iso_date(cell(1));
    if (!date || cell(0).empty()) {
      ++local.bad_dates;
      continue;
    }
    auto value = [&](int i) -> std::optional<float> {
      auto v = csv::parse_double(cell(i));
      return v ? std::optional<float>(static_cast<float>(*v)) : std::nullopt;
    };
    WeatherObservation obs{cell(0), *date, value(2), value(3), value(4), value(5), value(6)};
    auto drop_negative = [&](std::optional<float>& v) {
      if (v && *v < 0) {
        v.reset();
        ++local.invalid_values;
      }
    };
    drop_negative(obs.prcp);
    drop_negative(obs.snow);
    if (obs.tmax && obs.tmin && *obs.tmin > *obs.tmax) {
      obs.tmax.reset();
      obs.tmin.reset();
      ++local.invalid_values;
    }
    auto [it, inserted] = by_key.insert_or_assign({obs.station_id, days_from_civil(obs.date)}, obs);
    if (!inserted) ++local.duplicates;
  }
  std::vector<WeatherObservation> out;
  out.reserve(by_key.size());
  for (auto& [k, v] : by_key) out.push_back(std::move(v));
  if (stats) *stats = local;
  return out;
}

std::vector<WeatherObservation> load_observations(const fs::path& path, WeatherLoadStats* stats) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  return load_observations(in, stats);
}

void write_observations(std::span<const WeatherObservation> observations, std::ostream& out) {
  out << "STATION,DATE,AWND,PRCP,SNOW,TMAX,TMIN\n";
  auto put = [&](const std::optional<float>& v) {
    out << ',';
    if (v) out << csv::format_double(*v);
  };
  for (const auto& o : observations) {
    csv::write_field(out, o.station_id);
    out << ',' << format_iso_date(o.date);
    put(o.awnd);
    put(o.prcp);
    put(o.snow);
    put(o.tmax);
    put(o.tmin);
    out << '\n';
  }
}

// --- station map ---------------------------------------------------------------

StationMap::StationMap(std::map<std::string, std::string> entries) : entries_(std::move(entries)) {
  std::set<std::string> stations;
  for (const auto& [iata, station] : entries_) {
    if (iata.empty() || station.empty())
      throw Error(ErrorCode::config, "station map entries must be non-empty");
    if (!stations.insert(station).second)
      throw Error(ErrorCode::config, "station " + station + " mapped to more than one airport");
  }
}

StationMap StationMap::defaults() {
  return StationMap({
      {"JFK", "USW00094789"}, {"LAX", "USW00023174"}, {"ORD", "USW00094846"},
      {"ATL", "USW00013874"}, {"DFW", "USW00003927"}, {"DEN", "USW00003017"},
      {"SFO", "USW00023234"}, {"SEA", "USW00024233"}, {"MIA", "USW00012839"},
      {"BOS", "USW00014739"},
  });
}

StationMap StationMap::from_json(const std::string& text) {
  try {
    return StationMap(json::parse(text).get<std::map<std::string, std::string>>());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config, std::string("invalid station map: ") + e.what());
  }
}

StationMap StationMap::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string StationMap::to_json() const { return json(entries_).dump(2); }

std::optional<std::string> StationMap::station_for(const std::string& iata) const {
  auto it = entries_.find(iata);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

// --- medians and join ------------------------------------------------------------

std::optional<double> lower_median(std::vector<double> values) {
  std::erase_if(values, [](double v) { return std::isnan(v); });
  if (values.empty()) return std::nullopt;
  const std::size_t k = (values.size() - 1) / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
  return values[k];
}

ImputationMedians compute_medians(std::span<const FlightRecord> training) {
  ImputationMedians m;
  for (std::size_t c = 0; c < kWeatherColumnCount; ++c) {
    std::vector<double> column;
    column.reserve(training.size());
    for (const auto& r : training)
      if (r.weather[c]) column.push_back(*r.weather[c]);
    m.values[c] = lower_median(std::move(column)).value_or(0.0);
  }
  return m;
}

ObservationIndex::ObservationIndex(std::span<const WeatherObservation> observations) {
  for (const auto& o : observations) by_key_.insert_or_assign({o.station_id, days_from_civil(o.date)}, o);
}

const WeatherObservation* ObservationIndex::find(const std::string& station, const Date& date) const {
  auto it = by_key_.find({station, days_from_civil(date)});
  return it == by_key_.end() ? nullptr : &it->second;
}

void impute_weather(std::vector<FlightRecord>& records, const ImputationMedians& medians) {
  for (auto& r : records)
    for (std::size_t c = 0; c < kWeatherColumnCount; ++c)
      if (!r.weather[c]) r.weather[c] = static_cast<float>(medians.values[c]);
}

JoinStats join_weather(std::vector<FlightRecord>& records, const ObservationIndex& observations,
                       const StationMap& stations, const ImputationMedians* medians, int year) {
  JoinStats stats;
  stats.rows = records.size();
  for (auto& r : records) {
    r.weather = {};
    const auto station = stations.station_for(r.origin);
    const WeatherObservation* obs = nullptr;
    if (station && r.month && r.day_of_month && is_valid_date(year, *r.month, *r.day_of_month))
      obs = observations.find(*station, Date{year, *r.month, *r.day_of_month});
    if (obs) {
      ++stats.observed;
      r.weather = obs->values();
    }
    for (std::size_t c = 0; c < kWeatherColumnCount; ++c) {
      if (r.weather[c]) continue;
      if (medians) {
        r.weather[c] = static_cast<float>(medians->values[c]);
        ++stats.imputed_fields;
      }
    }
  }
  return stats;
}

}  // namespace flightsense
