#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flightsense/calendar.hpp"
#include "flightsense/ingest.hpp"
#include "flightsense/weather.hpp"

namespace flightsense {

struct SynthConfig {
  std::size_t n_aircraft = 500;
  int days = 30;
  int legs_min = 3;
  int legs_max = 6;
  double base_delay_rate = 0.1912;
  // P(delay) forced by a delayed inbound leg with a tight turnaround.
  double propagation_strength = 0.0;
  // Added delay probability per inch of origin snow.
  double weather_effect = 0.0;
  std::uint64_t seed = 7;
  Date start{2018, 1, 1};
  int turnaround_min = 25;
  int turnaround_max = 90;
  // Fraction of rows followed by a defective copy (cancelled, blank tail,
  // blank target or blank departure time) that cleaning must remove.
  double dirty_rate = 0.0;
  unsigned workers = 0;

  // Throws Error(config) for probabilities outside [0,1], empty ranges or a
  // leg count that cannot fit in one day.
  void validate() const;
};

struct SynthCorpus {
  std::vector<FlightRecord> flights;  // ordered by date, CRSDepTime, tail
  std::vector<WeatherObservation> weather;
};

// The ten synthetic airports (IATA codes of the default station map).
const std::vector<std::string>& synth_airports();
const std::vector<std::string>& synth_airlines();
double great_circle_miles(const std::string& origin, const std::string& dest);

SynthCorpus generate(const SynthConfig& config);

struct SynthFiles {
  std::vector<std::filesystem::path> flight_files;
  std::filesystem::path weather_file;
};

// flights_<year>_<MM>.csv per month (raw on-time-performance layout with a few
// unused columns) plus weather.csv.
SynthFiles write_corpus(const SynthCorpus& corpus, const std::filesystem::path& out_dir);

}  // namespace flightsense
