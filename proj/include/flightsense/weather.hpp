#pragma once

#include <array>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flightsense/calendar.hpp"
#include "flightsense/ingest.hpp"

namespace flightsense {

struct WeatherObservation {
  std::string station_id;
  Date date;
  std::optional<float> awnd;  // mph
  std::optional<float> prcp;  // inches
  std::optional<float> snow;  // inches
  std::optional<float> tmax;  // deg F
  std::optional<float> tmin;  // deg F

  WeatherValues values() const { return {awnd, prcp, snow, tmax, tmin}; }
  bool operator==(const WeatherObservation&) const = default;
};

struct WeatherLoadStats {
  std::size_t rows = 0;
  std::size_t duplicates = 0;      // later row replaced an earlier one
  std::size_t bad_dates = 0;       // row skipped
  std::size_t invalid_values = 0;  // negative prcp/snow or tmin > tmax, nulled
};

// GHCND-style CSV with STATION, DATE, AWND, PRCP, SNOW, TMAX, TMIN columns.
// Returns one observation per (station, date), sorted by (station, date).
std::vector<WeatherObservation> load_observations(std::istream& csv,
                                                  WeatherLoadStats* stats = nullptr);
std::vector<WeatherObservation> load_observations(const std::filesystem::path& path,
                                                  WeatherLoadStats* stats = nullptr);

void write_observations(std::span<const WeatherObservation> observations, std::ostream& out);

// IATA code -> GHCND station id; bijective.
class StationMap {
 public:
  StationMap() = default;
  explicit StationMap(std::map<std::string, std::string> entries);

  // The ten airports of the default deployment.
  static StationMap defaults();
  static StationMap from_json(const std::string& text);
  static StationMap load(const std::filesystem::path& path);
  std::string to_json() const;

  std::optional<std::string> station_for(const std::string& iata) const;
  const std::map<std::string, std::string>& entries() const noexcept { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

// Training-split medians for the five weather columns (same order as WeatherValues).
struct ImputationMedians {
  std::array<double, kWeatherColumnCount> values{};
};

// Lower median: element floor((n-1)/2) of the sorted non-null values.
// Returns nullopt for an all-null input.
std::optional<double> lower_median(std::vector<double> values);

ImputationMedians compute_medians(std::span<const FlightRecord> training_records);

class ObservationIndex {
 public:
  ObservationIndex() = default;
  explicit ObservationIndex(std::span<const WeatherObservation> observations);

  const WeatherObservation* find(const std::string& station, const Date& date) const;
  std::size_t size() const noexcept { return by_key_.size(); }

 private:
  std::map<std::pair<std::string, long>, WeatherObservation> by_key_;
};

struct JoinStats {
  std::size_t rows = 0;
  std::size_t observed = 0;   // station-day found
  std::size_t imputed_fields = 0;
};

// Attaches origin weather to each record by (origin, date). Without medians
// the unmatched fields stay null (first pass); with medians every field is
// filled, per field, so the result is total.
JoinStats join_weather(std::vector<FlightRecord>& records, const ObservationIndex& observations,
                       const StationMap& stations, const ImputationMedians* medians,
                       int year = 2018);

// Fills remaining null weather fields from medians.
void impute_weather(std::vector<FlightRecord>& records, const ImputationMedians& medians);

}  // namespace flightsense
