#include "flightsense/features.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "flightsense/csv.hpp"
#include "flightsense/error.hpp"

namespace flightsense {

namespace fs = std::filesystem;
using json = nlohmann::json;

int hhmm_to_minutes(int hhmm) {
  if (hhmm < 0 || hhmm > 2359 || hhmm % 100 > 59)
    throw Error(ErrorCode::domain, "HHMM value out of range: " + std::to_string(hhmm));
  return hhmm / 100 * 60 + hhmm % 100;
}

ChainKey chain_key(const FlightRecord& r) {
  return ChainKey{r.tail_number, r.month.value_or(0), r.day_of_month.value_or(0)};
}

namespace {

auto sort_key(const FlightRecord& r) {
  return std::make_tuple(std::string_view(r.tail_number), r.month.value_or(0),
                         r.day_of_month.value_or(0), r.crs_dep_time.value_or(0));
}

}  // namespace

void sort_chains(std::vector<FlightRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const FlightRecord& a, const FlightRecord& b) {
    return sort_key(a) < sort_key(b);
  });
}

std::size_t chain_order_violations(std::span<const FlightRecord> records) {
  std::size_t violations = 0;
  for (std::size_t i = 1; i < records.size(); ++i)
    if (sort_key(records[i]) < sort_key(records[i - 1])) ++violations;
  return violations;
}

PropagationFeatures propagation_from(const PredecessorContext* pred, int dep_minutes) {
  PropagationFeatures f;
  if (!pred) return f;
  f.is_first_flight = 0;
  f.prev_arr_delay = pred->arr_delay;
  f.prev_was_delayed = pred->arr_delay > kDelayThresholdMinutes;
  f.tail_daily_delay = pred->accumulated_delay;
  if (pred->arrival_known) {
    int turnaround = dep_minutes - pred->scheduled_arrival_min;
    if (turnaround < kOvernightCorrectionMinutes) turnaround += 1440;
    f.turnaround = static_cast<std::int16_t>(turnaround);
    f.tight_turnaround = turnaround < kTightTurnaroundMinutes;
  }
  return f;
}

std::vector<PropagationFeatures> compute_propagation(std::span<const FlightRecord> records) {
  std::vector<PropagationFeatures> out;
  out.reserve(records.size());
  PredecessorContext pred;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!r.crs_dep_time || !r.month || !r.day_of_month || r.tail_number.empty())
      throw Error(ErrorCode::contract, "record " + std::to_string(i) +
                                           " lacks tail, date or departure time; clean first");
    if (i > 0 && sort_key(r) < sort_key(records[i - 1]))
      throw Error(ErrorCode::contract,
                  "records not in chain order at index " + std::to_string(i) + " (tail " +
                      r.tail_number + ")");

    const bool continues = i > 0 && chain_key(records[i - 1]) == chain_key(r);
    if (continues) {
      const auto& p = records[i - 1];
      const double p_delay = p.arr_delay.value_or(0.0f);
      pred.accumulated_delay += p_delay;
      pred.arr_delay = p_delay;
      pred.arrival_known = p.crs_arr_time.has_value();
      pred.scheduled_arrival_min = p.crs_arr_time ? hhmm_to_minutes(*p.crs_arr_time) : 0;
    } else {
      pred = PredecessorContext{};
    }
    out.push_back(propagation_from(continues ? &pred : nullptr, hhmm_to_minutes(*r.crs_dep_time)));
  }
  return out;
}

bool is_peak_hour(int dep_hour) noexcept {
  return (dep_hour >= 6 && dep_hour <= 10) || (dep_hour >= 16 && dep_hour <= 20);
}

TimeFeatures compute_time_features(int crs_dep_time) {
  TimeFeatures t;
  t.dep_hour = std::clamp(crs_dep_time / 100, 0, 23);
  t.is_peak_hour = is_peak_hour(t.dep_hour);
  t.is_early_morning = t.dep_hour < 7;
  return t;
}

// --- rate table ----------------------------------------------------------------

std::string RateTable::route_key(std::string_view origin, std::string_view dest) {
  std::string key(origin);
  key += '-';
  key += dest;
  return key;
}

RateTable RateTable::build(std::span<const FlightRecord> records) {
  RateTable t;
  for (const auto& r : records) {
    if (!r.arr_del15) continue;
    const std::uint64_t delayed = *r.arr_del15 == 1;
    auto bump = [&](Counts& c) {
      c.delayed += delayed;
      ++c.total;
    };
    bump(t.route_counts_[route_key(r.origin, r.dest)]);
    bump(t.airline_counts_[r.airline]);
    bump(t.global_counts_);
  }
  if (t.global_counts_.total == 0)
    throw Error(ErrorCode::invalid_argument, "rate table needs at least one record with a target");
  t.finalize();
  return t;
}

void RateTable::merge(const RateTable& other) {
  auto add = [](auto& into, const auto& from) {
    for (const auto& [k, c] : from) {
      into[k].delayed += c.delayed;
      into[k].total += c.total;
    }
  };
  add(route_counts_, other.route_counts_);
  add(airline_counts_, other.airline_counts_);
  global_counts_.delayed += other.global_counts_.delayed;
  global_counts_.total += other.global_counts_.total;
  finalize();
}

void RateTable::finalize() {
  auto rate = [](const Counts& c) {
    return c.total ? static_cast<double>(c.delayed) / static_cast<double>(c.total) : 0.0;
  };
  route_rates_.clear();
  airline_rates_.clear();
  for (const auto& [k, c] : route_counts_) route_rates_[k] = rate(c);
  for (const auto& [k, c] : airline_counts_) airline_rates_[k] = rate(c);
  global_rate_ = rate(global_counts_);
}

double RateTable::route_rate(std::string_view origin, std::string_view dest) const {
  auto it = route_rates_.find(route_key(origin, dest));
  return it == route_rates_.end() ? global_rate_ : it->second;
}

double RateTable::airline_rate(std::string_view airline) const {
  auto it = airline_rates_.find(airline);
  return it == airline_rates_.end() ? global_rate_ : it->second;
}

std::string RateTable::to_json() const {
  json j;
  j["global"] = global_rate_;
  j["routes"] = json::object();
  j["airlines"] = json::object();
  for (const auto& [k, v] : route_rates_) j["routes"][k] = v;
  for (const auto& [k, v] : airline_rates_) j["airlines"][k] = v;
  return j.dump(2);
}

RateTable RateTable::from_json(const std::string& text) {
  RateTable t;
  try {
    const json j = json::parse(text);
    t.global_rate_ = j.at("global").get<double>();
    for (const auto& [k, v] : j.at("routes").items()) t.route_rates_[k] = v.get<double>();
    for (const auto& [k, v] : j.at("airlines").items()) t.airline_rates_[k] = v.get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format, std::string("invalid rate table: ") + e.what());
  }
  auto in_unit = [](double r) { return std::isfinite(r) && r >= 0 && r <= 1; };
  bool ok = in_unit(t.global_rate_);
  for (const auto& [k, v] : t.route_rates_) ok = ok && in_unit(v);
  for (const auto& [k, v] : t.airline_rates_) ok = ok && in_unit(v);
  if (!ok) throw Error(ErrorCode::format, "rate table contains a rate outside [0,1]");
  return t;
}

void RateTable::save(const fs::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << to_json() << '\n';
}

RateTable RateTable::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

// --- holidays ------------------------------------------------------------------

namespace {

using MonthDay = std::pair<int, int>;

constexpr std::array<MonthDay, 11> kHolidaysV1 = {{
    {1, 1}, {1, 2}, {7, 4}, {11, 11}, {11, 25}, {11, 27}, {11, 26}, {11, 28}, {12, 25}, {12, 26},
    {12, 31},
}};

constexpr std::array<MonthDay, 18> kHolidaysV2 = {{
    {1, 1}, {1, 2}, {1, 15}, {2, 19}, {5, 28}, {7, 3}, {7, 4}, {7, 5}, {9, 3},
    {11, 21}, {11, 22}, {11, 23}, {11, 25}, {11, 26}, {12, 24}, {12, 25}, {12, 26}, {12, 31},
}};

}  // namespace

bool is_holiday(int version, int month, int day) {
  const MonthDay md{month, day};
  if (version == 1) return std::find(kHolidaysV1.begin(), kHolidaysV1.end(), md) != kHolidaysV1.end();
  return std::find(kHolidaysV2.begin(), kHolidaysV2.end(), md) != kHolidaysV2.end();
}

// --- assembly ------------------------------------------------------------------

const std::vector<std::string>& feature_names(int version) {
  static const std::vector<std::string> kV1 = {
      "Year", "Quarter", "Month", "DayofMonth", "DayOfWeek", "Reporting_Airline",
      "Origin", "Dest", "AirTime", "Distance", "is_holiday"};
  static const std::vector<std::string> kV2 = [] {
    auto v = kV1;
    for (const char* n : {"prev_arr_delay", "prev_was_delayed", "turnaround", "tight_turnaround",
                          "is_first_flight", "tail_daily_delay", "dep_hour", "is_peak_hour",
                          "is_early_morning", "route_delay_rate", "airline_delay_rate"})
      v.emplace_back(n);
    return v;
  }();
  static const std::vector<std::string> kV3 = [] {
    auto v = kV2;
    for (const auto& n : weather_feature_names()) v.push_back(n);
    return v;
  }();
  switch (version) {
    case 1: return kV1;
    case 2: return kV2;
    case 3: return kV3;
  }
  throw Error(ErrorCode::invalid_argument,
              "feature version must be 1, 2 or 3, got " + std::to_string(version));
}

const std::vector<std::string>& categorical_columns() {
  static const std::vector<std::string> kCols = {"Reporting_Airline", "Origin", "Dest"};
  return kCols;
}

const std::vector<std::string>& weather_feature_names() {
  static const std::vector<std::string> kCols = {"origin_wind", "origin_precip", "origin_snow",
                                                 "origin_tmax", "origin_tmin"};
  return kCols;
}

bool is_categorical(std::string_view column) {
  const auto& c = categorical_columns();
  return std::find(c.begin(), c.end(), column) != c.end();
}

const std::vector<std::string>& leakage_columns() {
  static const std::vector<std::string> kCols = {"DepDelay", "CarrierDelay", "WeatherDelay",
                                                 "NASDelay", "LateAircraftDelay", "ArrDelay"};
  return kCols;
}

const std::vector<std::string>& dropped_columns() {
  static const std::vector<std::string> kCols = {"Tail_Number", "ArrDelay",   "DepDelay",
                                                 "CRSDepTime",  "CRSArrTime", "DepTime"};
  return kCols;
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <class T>
double num(const std::optional<T>& v) {
  return v ? static_cast<double>(*v) : kNaN;
}

void assert_no_leakage(const std::vector<std::string>& names) {
  for (const auto& n : names)
    for (const auto* banned : {&leakage_columns(), &dropped_columns()})
      if (std::find(banned->begin(), banned->end(), n) != banned->end())
        throw Error(ErrorCode::internal, "leakage assertion failed: column '" + n + "' in output");
}

}  // namespace

std::vector<FeatureValue> build_feature_row(int version, const FlightRecord& r,
                                            const PropagationFeatures& p, const RateTable& rates) {
  const auto& names = feature_names(version);
  std::vector<FeatureValue> row;
  row.reserve(names.size());
  const int holiday_set = version == 1 ? 1 : 2;
  const bool holiday = r.month && r.day_of_month &&
                       is_holiday(holiday_set, *r.month, *r.day_of_month);

  row.emplace_back(num(r.year));
  row.emplace_back(num(r.quarter));
  row.emplace_back(num(r.month));
  row.emplace_back(num(r.day_of_month));
  row.emplace_back(num(r.day_of_week));
  row.emplace_back(r.airline);
  row.emplace_back(r.origin);
  row.emplace_back(r.dest);
  row.emplace_back(num(r.air_time));
  row.emplace_back(num(r.distance));
  row.emplace_back(holiday ? 1.0 : 0.0);
  if (version >= 2) {
    const auto t = compute_time_features(r.crs_dep_time.value_or(0));
    row.emplace_back(p.prev_arr_delay);
    row.emplace_back(static_cast<double>(p.prev_was_delayed));
    row.emplace_back(static_cast<double>(p.turnaround));
    row.emplace_back(static_cast<double>(p.tight_turnaround));
    row.emplace_back(static_cast<double>(p.is_first_flight));
    row.emplace_back(p.tail_daily_delay);
    row.emplace_back(static_cast<double>(t.dep_hour));
    row.emplace_back(static_cast<double>(t.is_peak_hour));
    row.emplace_back(static_cast<double>(t.is_early_morning));
    row.emplace_back(rates.route_rate(r.origin, r.dest));
    row.emplace_back(rates.airline_rate(r.airline));
  }
  if (version >= 3)
    for (const auto& w : r.weather) row.emplace_back(num(w));
  return row;
}

const FeatureColumn& FeatureMatrix::column(std::string_view name) const {
  for (const auto& c : columns)
    if (c.name == name) return c;
  throw Error(ErrorCode::shape, "feature matrix has no column '" + std::string(name) + "'");
}

FeatureMatrix assemble_features(int version, std::span<const FlightRecord> records,
                                std::span<const PropagationFeatures> propagation,
                                const RateTable& rates) {
  const auto& names = feature_names(version);
  if (records.size() != propagation.size())
    throw Error(ErrorCode::invalid_argument, "records and propagation rows differ in length");
  assert_no_leakage(names);

  FeatureMatrix m;
  m.version = version;
  m.target.reserve(records.size());
  for (const auto& n : names) {
    FeatureColumn c;
    c.name = n;
    c.categorical = is_categorical(n);
    if (c.categorical) c.labels.reserve(records.size());
    else c.numeric.reserve(records.size());
    m.columns.push_back(std::move(c));
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto row = build_feature_row(version, records[i], propagation[i], rates);
    m.target.push_back(num(records[i].arr_del15));
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (m.columns[c].categorical) m.columns[c].labels.push_back(std::get<std::string>(std::move(row[c])));
      else m.columns[c].numeric.push_back(std::get<double>(row[c]));
    }
  }
  return m;
}

void write_feature_matrix(const FeatureMatrix& m, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << kTargetName;
  for (const auto& c : m.columns) {
    out << ',';
    csv::write_field(out, c.name);
  }
  out << '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out << csv::format_double(m.target[i]);
    for (const auto& c : m.columns) {
      out << ',';
      if (c.categorical) csv::write_field(out, c.labels[i]);
      else if (!std::isnan(c.numeric[i])) out << csv::format_double(c.numeric[i]);
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

FeatureMatrix read_feature_matrix(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  csv::Reader reader(in);
  std::vector<std::string> row;
  if (!reader.next(row)) throw Error(ErrorCode::schema, path.string() + ": empty feature matrix");
  if (row.empty() || row[0] != kTargetName)
    throw Error(ErrorCode::schema, path.string() + ": first column must be ArrDel15");
  const std::vector<std::string> header(row.begin() + 1, row.end());

  FeatureMatrix m;
  for (int v = 1; v <= 3; ++v)
    if (feature_names(v) == header) m.version = v;
  if (m.version == 0)
    throw Error(ErrorCode::schema, path.string() + ": header matches no feature version");
  for (const auto& n : header) m.columns.push_back(FeatureColumn{n, is_categorical(n), {}, {}});

  while (reader.next(row)) {
    if (row.size() != header.size() + 1)
      throw Error(ErrorCode::parse, path.string() + ": line " + std::to_string(reader.line()) +
                                        " has " + std::to_string(row.size()) + " fields");
    auto target = csv::parse_double(row[0]);
    if (!target || (*target != 0 && *target != 1))
      throw Error(ErrorCode::parse,
                  path.string() + ": line " + std::to_string(reader.line()) + " has invalid target");
    m.target.push_back(*target);
    for (std::size_t c = 0; c < header.size(); ++c) {
      auto& col = m.columns[c];
      if (col.categorical) {
        col.labels.push_back(row[c + 1]);
      } else if (row[c + 1].empty()) {
        col.numeric.push_back(kNaN);
      } else {
        auto v = csv::parse_double(row[c + 1]);
        if (!v)
          throw Error(ErrorCode::parse, path.string() + ": line " + std::to_string(reader.line()) +
                                            ", column " + col.name + ": not a number");
        col.numeric.push_back(*v);
      }
    }
  }
  return m;
}

FeatureBuild build_features(int version, std::vector<FlightRecord> records) {
  feature_names(version);  // validates version
  sort_chains(records);
  const auto propagation = compute_propagation(records);
  auto rates = RateTable::build(records);
  auto matrix = assemble_features(version, records, propagation, rates);
  return FeatureBuild{std::move(matrix), std::move(rates)};
}

}  // namespace flightsense
