#include "flightsense/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "flightsense/csv.hpp"
#include "flightsense/error.hpp"
#include "flightsense/features.hpp"

namespace flightsense {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::array<std::string_view, kConditionCount> kConditionNames = {
    "high_delay_airport", "high_wind",        "heavy_precip",         "any_snow",
    "peak_hours",         "friday_or_sunday", "prev_aircraft_delayed"};

constexpr std::array<std::string_view, 3> kHighDelayAirports = {"JFK", "ORD", "EWR"};

}  // namespace

std::string_view condition_name(Condition c) noexcept {
  return kConditionNames[static_cast<std::size_t>(c)];
}

Condition condition_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kConditionCount; ++i)
    if (kConditionNames[i] == name) return static_cast<Condition>(i);
  throw Error(ErrorCode::config, "unknown risk condition '" + std::string(name) + "'");
}

RiskConditions detect_conditions(const FlightContext& flight, const WeatherReading& weather) {
  RiskConditions c;
  c.set(Condition::high_delay_airport,
        std::find(kHighDelayAirports.begin(), kHighDelayAirports.end(), flight.origin) !=
            kHighDelayAirports.end());
  c.set(Condition::high_wind, weather.wind > 25.0);
  c.set(Condition::heavy_precip, weather.precip > 0.3);
  c.set(Condition::any_snow, weather.snow > 0.0);
  c.set(Condition::peak_hours, is_peak_hour(compute_time_features(flight.crs_dep_time).dep_hour));
  c.set(Condition::friday_or_sunday, flight.day_of_week == 5 || flight.day_of_week == 7);
  c.set(Condition::prev_aircraft_delayed, flight.prev_arr_delay > kDelayThresholdMinutes);
  return c;
}

void RiskConfig::validate() const {
  if (!(base >= 0 && base <= 1)) throw Error(ErrorCode::config, "risk base rate must lie in [0,1]");
  if (!(cap >= 0 && cap <= 1)) throw Error(ErrorCode::config, "risk cap must lie in [0,1]");
  for (std::size_t i = 0; i < kConditionCount; ++i)
    if (!(multipliers[i] > 0) || !std::isfinite(multipliers[i]))
      throw Error(ErrorCode::config, "multiplier for " + std::string(kConditionNames[i]) +
                                         " must be positive, got " +
                                         csv::format_double(multipliers[i]));
}

std::string RiskConfig::to_json() const {
  json j;
  j["base"] = base;
  j["cap"] = cap;
  j["multipliers"] = json::object();
  for (std::size_t i = 0; i < kConditionCount; ++i)
    j["multipliers"][std::string(kConditionNames[i])] = multipliers[i];
  return j.dump(2);
}

RiskConfig RiskConfig::from_json(const std::string& text) {
  RiskConfig cfg;
  try {
    const json j = json::parse(text);
    cfg.base = j.value("base", cfg.base);
    cfg.cap = j.value("cap", cfg.cap);
    if (j.contains("multipliers"))
      for (const auto& [name, value] : j["multipliers"].items())
        cfg.multipliers[static_cast<std::size_t>(condition_from_name(name))] = value.get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config, std::string("invalid risk config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

RiskConfig RiskConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string_view tier_name(Tier t) noexcept {
  switch (t) {
    case Tier::high: return "high";
    case Tier::moderate: return "moderate";
    case Tier::low: return "low";
    case Tier::on_time: return "on-time";
  }
  return "on-time";
}

Tier tier(double p) {
  if (p > 0.70) return Tier::high;
  if (p > 0.50) return Tier::moderate;
  if (p > 0.30) return Tier::low;
  return Tier::on_time;
}

RiskEstimate compound_risk(const RiskConditions& conditions, const RiskConfig& config) {
  config.validate();
  RiskEstimate est;
  est.base_rate = config.base;
  double product = 1.0;
  for (std::size_t i = 0; i < kConditionCount; ++i) {
    if (!conditions.active[i]) continue;
    const auto c = static_cast<Condition>(i);
    product *= config.multiplier(c);
    est.applied.emplace_back(c, config.multiplier(c));
  }
  const double raw = config.base * product;
  est.capped = raw > config.cap;
  est.probability = std::min(config.cap, raw);
  est.tier = tier(est.probability);
  return est;
}

// --- scorers ---------------------------------------------------------------------

std::vector<double> Scorer::score_rows(const NumericMatrix& m, std::size_t first,
                                       std::size_t count) const {
  std::vector<double> out;
  out.reserve(count);
  for (std::size_t i = first; i < first + count; ++i) out.push_back(score_row(m.row(i), i));
  return out;
}

std::vector<double> align_to_manifest(const std::vector<std::string>& names,
                                      std::span<const double> values,
                                      const std::vector<std::string>& manifest) {
  if (names.size() != values.size())
    throw Error(ErrorCode::shape, "feature names and values differ in length");
  std::vector<std::string> missing, extra;
  std::vector<double> out(manifest.size());
  for (std::size_t m = 0; m < manifest.size(); ++m) {
    auto it = std::find(names.begin(), names.end(), manifest[m]);
    if (it == names.end()) missing.push_back(manifest[m]);
    else out[m] = values[static_cast<std::size_t>(it - names.begin())];
  }
  for (const auto& n : names)
    if (std::find(manifest.begin(), manifest.end(), n) == manifest.end()) extra.push_back(n);
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "feature vector does not match model manifest;";
    auto list = [&](const char* label, const std::vector<std::string>& v) {
      if (v.empty()) return;
      msg += std::string(" ") + label + ":";
      for (const auto& s : v) msg += " " + s;
    };
    list("missing", missing);
    list("extra", extra);
    throw Error(ErrorCode::shape, msg);
  }
  return out;
}

void check_manifest(const NumericMatrix& m, const Scorer& scorer) {
  if (m.feature_names == scorer.manifest()) return;
  std::vector<double> dummy(m.feature_names.size());
  align_to_manifest(m.feature_names, dummy, scorer.manifest());
  throw Error(ErrorCode::shape, "matrix columns are in a different order than the model manifest");
}

double score(const std::vector<std::string>& names, std::span<const double> values,
             const Scorer& scorer, std::size_t row_id) {
  const auto row = align_to_manifest(names, values, scorer.manifest());
  const double p = scorer.score_row(row, row_id);
  if (!(p >= 0.0 && p <= 1.0))
    throw Error(ErrorCode::internal, "scorer returned a probability outside [0,1]");
  return p;
}

FilePredictionScorer::FilePredictionScorer(std::vector<double> predictions,
                                           std::vector<std::string> manifest)
    : predictions_(std::move(predictions)), manifest_(std::move(manifest)) {
  for (double p : predictions_)
    if (!(p >= 0 && p <= 1)) throw Error(ErrorCode::format, "stored prediction outside [0,1]");
}

FilePredictionScorer FilePredictionScorer::load(const fs::path& path,
                                                std::vector<std::string> manifest) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::vector<double> preds;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (lineno == 1 && line == "prediction")) continue;
    auto v = csv::parse_double(line);
    if (!v) throw Error(ErrorCode::parse, path.string() + ": line " + std::to_string(lineno));
    preds.push_back(*v);
  }
  return FilePredictionScorer(std::move(preds), std::move(manifest));
}

double FilePredictionScorer::score_row(std::span<const double>, std::size_t row_id) const {
  if (row_id >= predictions_.size())
    throw Error(ErrorCode::shape, "no stored prediction for row " + std::to_string(row_id));
  return predictions_[row_id];
}

RemoteHttpScorer::RemoteHttpScorer(std::string base_url, std::vector<std::string> manifest,
                                   std::string path)
    : base_url_(std::move(base_url)), manifest_(std::move(manifest)), path_(std::move(path)) {}

std::vector<double> RemoteHttpScorer::post(const std::vector<std::vector<double>>& rows) const {
  httplib::Client client(base_url_);
  client.set_connection_timeout(5);
  client.set_read_timeout(60);
  json body;
  body["columns"] = manifest_;
  body["instances"] = rows;
  auto res = client.Post(path_, body.dump(), "application/json");
  if (!res) throw Error(ErrorCode::io, "remote scorer unreachable at " + base_url_);
  if (res->status != 200)
    throw Error(ErrorCode::io, "remote scorer returned HTTP " + std::to_string(res->status) +
                                   ": " + res->body);
  try {
    auto preds = json::parse(res->body).at("predictions").get<std::vector<double>>();
    if (preds.size() != rows.size())
      throw Error(ErrorCode::shape, "remote scorer returned " + std::to_string(preds.size()) +
                                        " predictions for " + std::to_string(rows.size()) + " rows");
    return preds;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format, std::string("bad remote scorer response: ") + e.what());
  }
}

double RemoteHttpScorer::score_row(std::span<const double> row, std::size_t) const {
  return post({std::vector<double>(row.begin(), row.end())}).front();
}

std::vector<double> RemoteHttpScorer::score_rows(const NumericMatrix& m, std::size_t first,
                                                 std::size_t count) const {
  std::vector<std::vector<double>> rows;
  rows.reserve(count);
  for (std::size_t i = first; i < first + count; ++i) {
    const auto r = m.row(i);
    rows.emplace_back(r.begin(), r.end());
  }
  return post(rows);
}

}  // namespace flightsense
