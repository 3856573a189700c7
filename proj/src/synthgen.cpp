#include "flightsense/synthgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <tuple>
#include <cstdio>
#include <numbers>
#include <thread>

#include "flightsense/csv.hpp"
#include "flightsense/error.hpp"
#include "flightsense/rng.hpp"

namespace flightsense {

namespace fs = std::filesystem;

namespace {

struct Airport {
  const char* iata;
  const char* city;
  double lat, lon;
  double tmax_jan, tmax_jul, diurnal;
  double snow_prob;  // on a freezing day; negative = snow never reported
  double wind_mean;
  double rain_prob;
};

constexpr std::array<Airport, 10> kAirports = {{
    {"JFK", "New York, NY", 40.6413, -73.7781, 39, 84, 14, 0.30, 12, 0.30},
    {"LAX", "Los Angeles, CA", 33.9416, -118.4085, 68, 75, 15, 0.00, 8, 0.10},
    {"ORD", "Chicago, IL", 41.9742, -87.9073, 31, 84, 16, 0.35, 11, 0.30},
    {"ATL", "Atlanta, GA", 33.6407, -84.4277, 52, 89, 18, 0.10, 9, 0.33},
    {"DFW", "Dallas/Fort Worth, TX", 32.8998, -97.0403, 57, 96, 20, 0.10, 11, 0.25},
    {"DEN", "Denver, CO", 39.8561, -104.6737, 44, 89, 28, 0.30, 10, 0.20},
    {"SFO", "San Francisco, CA", 37.6213, -122.3790, 58, 72, 14, 0.00, 12, 0.18},
    {"SEA", "Seattle, WA", 47.4502, -122.3088, 48, 76, 12, 0.15, 9, 0.45},
    {"MIA", "Miami, FL", 25.7959, -80.2870, 76, 91, 14, -1.0, 10, 0.35},
    {"BOS", "Boston, MA", 42.3656, -71.0096, 36, 82, 15, 0.30, 13, 0.30},
}};
constexpr std::size_t kAirportCount = kAirports.size();

struct Airline {
  const char* code;
  double offset;  // additive delay-rate offset; the offsets sum to zero
};

constexpr std::array<Airline, 6> kAirlines = {{
    {"AA", 0.03}, {"DL", -0.02}, {"UA", 0.01}, {"WN", -0.03}, {"B6", 0.02}, {"AS", -0.01},
}};

constexpr int kFirstDepEarliest = 330;  // 05:30
constexpr int kFirstDepLatest = 540;    // 09:00
constexpr int kDayEnd = 1439;
constexpr int kTaxiMinutes = 20;
constexpr std::uint64_t kWeatherStream = 1ULL << 40;
constexpr std::uint64_t kDirtyStream = (1ULL << 40) + 1000;
constexpr double kMissingFieldRate = 0.01;

double haversine_miles(const Airport& a, const Airport& b) {
  constexpr double kEarthRadiusMiles = 3958.8;
  const double rad = std::numbers::pi / 180.0;
  const double dlat = (b.lat - a.lat) * rad, dlon = (b.lon - a.lon) * rad;
  const double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(a.lat * rad) * std::cos(b.lat * rad) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2 * kEarthRadiusMiles * std::asin(std::sqrt(h));
}

struct Network {
  std::array<std::array<double, kAirportCount>, kAirportCount> miles{};
  std::array<std::array<int, kAirportCount>, kAirportCount> air{};    // scheduled air minutes
  std::array<std::array<int, kAirportCount>, kAirportCount> block{};  // gate to gate

  Network() {
    for (std::size_t a = 0; a < kAirportCount; ++a)
      for (std::size_t b = 0; b < kAirportCount; ++b) {
        if (a == b) continue;
        miles[a][b] = std::round(haversine_miles(kAirports[a], kAirports[b]));
        air[a][b] = static_cast<int>(std::lround(miles[a][b] * 60.0 / 460.0)) + 8;
        block[a][b] = air[a][b] + kTaxiMinutes;
      }
  }

  // min_cost[k][a]: shortest time to fly k legs departing a, with minimal turnarounds between them.
  std::vector<std::array<int, kAirportCount>> min_cost(int legs, int min_turn) const {
    std::vector<std::array<int, kAirportCount>> cost(static_cast<std::size_t>(legs) + 1);
    cost[0].fill(0);
    for (int k = 1; k <= legs; ++k)
      for (std::size_t a = 0; a < kAirportCount; ++a) {
        int best = std::numeric_limits<int>::max();
        for (std::size_t b = 0; b < kAirportCount; ++b) {
          if (a == b) continue;
          const int tail = k > 1 ? min_turn + cost[k - 1][b] : 0;
          best = std::min(best, block[a][b] + tail);
        }
        cost[k][a] = best;
      }
    return cost;
  }
};

const Network& network() {
  static const Network n;
  return n;
}

int to_hhmm(int minutes) {
  minutes = ((minutes % 1440) + 1440) % 1440;
  return (minutes / 60) * 100 + minutes % 60;
}

float round1(double v) { return static_cast<float>(std::round(v * 10.0) / 10.0); }

struct DayWeather {
  WeatherObservation reported;
  double snow = 0;  // true snowfall, drives delays even when the report is missing
};

// weather[airport][day]
std::vector<std::vector<DayWeather>> make_weather(const SynthConfig& cfg) {
  std::vector<std::vector<DayWeather>> out(kAirportCount);
  const auto stations = StationMap::defaults();
  const long start = days_from_civil(cfg.start);
  for (std::size_t a = 0; a < kAirportCount; ++a) {
    const Airport& ap = kAirports[a];
    Xorshift64Star rng(cfg.seed, kWeatherStream + a);
    const std::string station = *stations.station_for(ap.iata);
    out[a].reserve(static_cast<std::size_t>(cfg.days));
    for (int d = 0; d < cfg.days; ++d) {
      const Date date = civil_from_days(start + d);
      const long doy = days_from_civil(date) - days_from_civil(Date{date.year, 1, 1});
      // Coldest around mid-January.
      const double season = 0.5 * (1 - std::cos(2 * std::numbers::pi * static_cast<double>(doy - 15) / 365.0));
      const double tmax = ap.tmax_jan + (ap.tmax_jul - ap.tmax_jan) * season + (rng.uniform() - 0.5) * 14;
      const double tmin = tmax - ap.diurnal * (0.7 + 0.6 * rng.uniform());
      double prcp = rng.bernoulli(ap.rain_prob) ? rng.exponential(0.35) : 0.0;
      double snow = 0;
      if (ap.snow_prob > 0 && tmin <= 33 && rng.bernoulli(ap.snow_prob)) {
        snow = 0.1 + rng.exponential(1.8);
        prcp = std::max(prcp, snow / 10);
      }
      const double wind = 3 + rng.exponential(ap.wind_mean - 3);

      DayWeather dw;
      dw.snow = round1(snow);
      auto& o = dw.reported;
      o.station_id = station;
      o.date = date;
      o.awnd = round1(wind);
      o.prcp = static_cast<float>(std::round(prcp * 100) / 100);
      o.snow = ap.snow_prob < 0 ? std::optional<float>() : std::optional<float>(round1(snow));
      o.tmax = static_cast<float>(std::round(tmax));
      o.tmin = static_cast<float>(std::round(tmin));
      for (auto* field : {&o.awnd, &o.prcp, &o.snow, &o.tmax, &o.tmin})
        if (rng.bernoulli(kMissingFieldRate)) field->reset();
      out[a].push_back(std::move(dw));
    }
  }
  return out;
}

std::string tail_for(std::size_t aircraft) {
  std::string s = std::to_string(10000 + aircraft % 90000);
  const char suffix[3] = {static_cast<char>('A' + (aircraft / 90000) % 26), static_cast<char>('A' + aircraft % 26), 0};
  return "N" + s + suffix;
}

std::vector<FlightRecord> fly_aircraft(const SynthConfig& cfg, std::size_t aircraft,
                                       const std::vector<std::vector<DayWeather>>& weather,
                                       const std::vector<std::array<int, kAirportCount>>& min_cost) {
  const Network& net = network();
  Xorshift64Star rng(cfg.seed, aircraft + 1);
  const Airline& airline = kAirlines[aircraft % kAirlines.size()];
  const std::string tail = tail_for(aircraft);
  const long start = days_from_civil(cfg.start);
  std::size_t at = static_cast<std::size_t>(rng.below(kAirportCount));

  std::vector<FlightRecord> legs;
  for (int d = 0; d < cfg.days; ++d) {
    const Date date = civil_from_days(start + d);
    const int n_legs = static_cast<int>(rng.range(cfg.legs_min, cfg.legs_max));
    int ready = static_cast<int>(rng.range(kFirstDepEarliest / 5, kFirstDepLatest / 5)) * 5;
    bool prev_delayed = false;
    for (int leg = 0; leg < n_legs; ++leg) {
      const int remaining = n_legs - leg - 1;
      auto fits = [&](int dep, std::size_t b) {
        const int after = remaining > 0 ? cfg.turnaround_min + min_cost[static_cast<std::size_t>(remaining)][b] : 0;
        return dep + net.block[at][b] + after <= kDayEnd;
      };
      int turnaround = leg == 0 ? 0 : static_cast<int>(rng.range(cfg.turnaround_min, cfg.turnaround_max));
      std::array<std::size_t, kAirportCount> options{};
      std::size_t n_options = 0;
      auto collect = [&](int dep) {
        n_options = 0;
        for (std::size_t b = 0; b < kAirportCount; ++b)
          if (b != at && fits(dep, b)) options[n_options++] = b;
      };
      collect(ready + turnaround);
      if (n_options == 0 && leg > 0) {
        turnaround = cfg.turnaround_min;
        collect(ready + turnaround);
      }
      if (n_options == 0) throw Error(ErrorCode::internal, "synthetic schedule packing failed");
      const std::size_t dest = options[rng.below(n_options)];
      const int dep = ready + turnaround;
      const int arr = dep + net.block[at][dest];

      const double snow = weather[at][static_cast<std::size_t>(d)].snow;
      const double p = std::clamp(cfg.base_delay_rate + airline.offset + cfg.weather_effect * snow, 0.0, 1.0);
      const bool tight = leg > 0 && turnaround < 45;
      bool delayed = rng.bernoulli(p);
      if (prev_delayed && tight && rng.bernoulli(cfg.propagation_strength)) delayed = true;
      const int arr_delay = delayed ? 16 + static_cast<int>(std::floor(rng.exponential(30.0)))
                                    : static_cast<int>(rng.range(-20, 14));
      const int dep_delay = arr_delay + static_cast<int>(rng.range(-6, 6));
      const int air_time = std::max(10, net.air[at][dest] + static_cast<int>(rng.range(-4, 4)));

      FlightRecord r;
      r.year = static_cast<std::int16_t>(date.year);
      r.quarter = static_cast<std::int8_t>(quarter_of(date.month));
      r.month = static_cast<std::int8_t>(date.month);
      r.day_of_month = static_cast<std::int8_t>(date.day);
      r.day_of_week = static_cast<std::int8_t>(day_of_week(date));
      r.airline = airline.code;
      r.origin = kAirports[at].iata;
      r.dest = kAirports[dest].iata;
      r.air_time = static_cast<float>(air_time);
      r.distance = static_cast<float>(net.miles[at][dest]);
      r.tail_number = tail;
      r.arr_del15 = static_cast<std::int8_t>(arr_delay >= 15);
      r.arr_delay = static_cast<float>(arr_delay);
      r.dep_delay = static_cast<float>(dep_delay);
      r.crs_dep_time = static_cast<std::int16_t>(to_hhmm(dep));
      r.crs_arr_time = static_cast<std::int16_t>(to_hhmm(arr));
      r.dep_time = static_cast<std::int16_t>(to_hhmm(dep + dep_delay));
      r.cancelled = 0;
      legs.push_back(std::move(r));

      prev_delayed = arr_delay > 15;
      ready = arr;
      at = dest;
    }
  }
  return legs;
}

void add_dirty_rows(std::vector<FlightRecord>& flights, const SynthConfig& cfg) {
  if (cfg.dirty_rate <= 0) return;
  Xorshift64Star rng(cfg.seed, kDirtyStream);
  std::vector<FlightRecord> out;
  out.reserve(flights.size() + static_cast<std::size_t>(cfg.dirty_rate * 1.2 * static_cast<double>(flights.size())) + 16);
  for (auto& r : flights) {
    out.push_back(r);
    if (!rng.bernoulli(cfg.dirty_rate)) continue;
    FlightRecord bad = r;
    switch (rng.below(4)) {
      case 0: bad.arr_del15.reset(); bad.arr_delay.reset(); break;
      case 1: bad.tail_number.clear(); break;
      case 2: bad.crs_dep_time.reset(); break;
      default: bad.cancelled = 1; break;
    }
    out.push_back(std::move(bad));
  }
  flights = std::move(out);
}

}  // namespace

const std::vector<std::string>& synth_airports() {
  static const std::vector<std::string> v = [] {
    std::vector<std::string> out;
    for (const auto& a : kAirports) out.emplace_back(a.iata);
    return out;
  }();
  return v;
}

const std::vector<std::string>& synth_airlines() {
  static const std::vector<std::string> v = [] {
    std::vector<std::string> out;
    for (const auto& a : kAirlines) out.emplace_back(a.code);
    return out;
  }();
  return v;
}

double great_circle_miles(const std::string& origin, const std::string& dest) {
  const Airport *a = nullptr, *b = nullptr;
  for (const auto& ap : kAirports) {
    if (origin == ap.iata) a = &ap;
    if (dest == ap.iata) b = &ap;
  }
  if (!a || !b) throw Error(ErrorCode::not_found, "unknown airport " + (a ? dest : origin));
  return haversine_miles(*a, *b);
}

void SynthConfig::validate() const {
  auto prob = [](double v, const char* name) {
    if (!(v >= 0 && v <= 1)) throw Error(ErrorCode::config, std::string(name) + " must lie in [0,1]");
  };
  prob(base_delay_rate, "base_delay_rate");
  prob(propagation_strength, "propagation_strength");
  prob(weather_effect, "weather_effect");
  prob(dirty_rate, "dirty_rate");
  if (n_aircraft == 0) throw Error(ErrorCode::config, "n_aircraft must be positive");
  if (days <= 0) throw Error(ErrorCode::config, "days must be positive");
  if (legs_min < 1 || legs_max < legs_min) throw Error(ErrorCode::config, "legs_per_day range is empty");
  if (turnaround_min < 1 || turnaround_max < turnaround_min)
    throw Error(ErrorCode::config, "turnaround range is empty");
  if (!is_valid_date(start.year, start.month, start.day)) throw Error(ErrorCode::config, "invalid start date");
  const auto cost = network().min_cost(legs_max, turnaround_min);
  const int worst = *std::max_element(cost.back().begin(), cost.back().end());
  if (kFirstDepLatest + worst > kDayEnd)
    throw Error(ErrorCode::config, std::to_string(legs_max) + " legs per day cannot fit between " +
                                       "a 09:00 first departure and midnight");
}

SynthCorpus generate(const SynthConfig& cfg) {
  cfg.validate();
  const auto weather = make_weather(cfg);
  const auto min_cost = network().min_cost(cfg.legs_max, cfg.turnaround_min);

  std::vector<std::vector<FlightRecord>> per_aircraft(cfg.n_aircraft);
  const unsigned workers = std::max(1u, std::min<unsigned>(cfg.workers ? cfg.workers : std::thread::hardware_concurrency(),
                                                           static_cast<unsigned>(std::min<std::size_t>(cfg.n_aircraft, 64))));
  auto run = [&](unsigned t) {
    for (std::size_t i = t; i < cfg.n_aircraft; i += workers) per_aircraft[i] = fly_aircraft(cfg, i, weather, min_cost);
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < workers; ++t) pool.emplace_back(run, t);
    for (auto& th : pool) th.join();
  }

  SynthCorpus corpus;
  std::size_t total = 0;
  for (const auto& v : per_aircraft) total += v.size();
  corpus.flights.reserve(total);
  for (auto& v : per_aircraft)
    for (auto& r : v) corpus.flights.push_back(std::move(r));
  std::stable_sort(corpus.flights.begin(), corpus.flights.end(), [](const FlightRecord& a, const FlightRecord& b) {
    return std::tie(*a.month, *a.day_of_month, *a.crs_dep_time, a.tail_number) <
           std::tie(*b.month, *b.day_of_month, *b.crs_dep_time, b.tail_number);
  });
  add_dirty_rows(corpus.flights, cfg);

  for (const auto& station : weather)
    for (const auto& d : station) corpus.weather.push_back(d.reported);
  std::sort(corpus.weather.begin(), corpus.weather.end(), [](const auto& a, const auto& b) {
    return std::tie(a.station_id, a.date) < std::tie(b.station_id, b.date);
  });
  return corpus;
}

SynthFiles write_corpus(const SynthCorpus& corpus, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  SynthFiles files;
  std::map<std::pair<int, int>, std::ofstream> streams;
  std::map<std::string, std::string> cities;
  for (const auto& a : kAirports) cities[a.iata] = a.city;

  auto opt = [](std::ostream& o, const auto& v) {
    if (v) o << csv::format_double(static_cast<double>(*v));
  };
  std::size_t row = 0;
  for (const auto& r : corpus.flights) {
    const int year = r.year.value_or(0), month = r.month.value_or(0);
    auto it = streams.find({year, month});
    if (it == streams.end()) {
      char name[64];
      std::snprintf(name, sizeof name, "flights_%04d_%02d.csv", year, month);
      const fs::path path = out_dir / name;
      it = streams.emplace(std::pair{year, month}, std::ofstream(path, std::ios::binary)).first;
      if (!it->second) throw Error(ErrorCode::io, "cannot write " + path.string());
      files.flight_files.push_back(path);
      it->second << "Year,Quarter,Month,DayofMonth,DayOfWeek,FlightDate,Reporting_Airline,Tail_Number,"
                    "Flight_Number_Reporting_Airline,Origin,OriginCityName,Dest,DestCityName,CRSDepTime,"
                    "DepTime,DepDelay,CRSArrTime,ArrDelay,ArrDel15,Cancelled,AirTime,Distance\n";
    }
    auto& o = it->second;
    auto hhmm = [&](const std::optional<std::int16_t>& v) {
      if (!v) return;
      char buf[8];
      std::snprintf(buf, sizeof buf, "%04d", static_cast<int>(*v));
      o << buf;
    };
    opt(o, r.year); o << ',';
    opt(o, r.quarter); o << ',';
    opt(o, r.month); o << ',';
    opt(o, r.day_of_month); o << ',';
    opt(o, r.day_of_week); o << ',';
    if (r.year && r.month && r.day_of_month) o << format_iso_date(Date{*r.year, *r.month, *r.day_of_month});
    o << ',' << r.airline << ',' << r.tail_number << ',' << 1000 + row % 8000 << ',' << r.origin << ',';
    csv::write_field(o, cities[r.origin]);
    o << ',' << r.dest << ',';
    csv::write_field(o, cities[r.dest]);
    o << ',';
    hhmm(r.crs_dep_time); o << ',';
    hhmm(r.dep_time); o << ',';
    opt(o, r.dep_delay); o << ',';
    hhmm(r.crs_arr_time); o << ',';
    opt(o, r.arr_delay); o << ',';
    opt(o, r.arr_del15); o << ',';
    opt(o, r.cancelled); o << ',';
    opt(o, r.air_time); o << ',';
    opt(o, r.distance); o << '\n';
    ++row;
  }
  for (auto& [k, s] : streams) {
    s.close();
    if (!s) throw Error(ErrorCode::io, "failed writing flight file");
  }

  files.weather_file = out_dir / "weather.csv";
  std::ofstream w(files.weather_file, std::ios::binary);
  if (!w) throw Error(ErrorCode::io, "cannot write " + files.weather_file.string());
  write_observations(corpus.weather, w);
  return files;
}

}  // namespace flightsense
