#include "flightsense/service.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <cmath>
#include <set>

#include <httplib.h>
#include <json.hpp>

namespace flightsense {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Values stored as float print with their shortest float spelling (5.7, not 5.69999980926).
double tidy(double v) {
  const float f = static_cast<float>(v);
  if (static_cast<double>(f) != v || !std::isfinite(f)) return v;
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, f);
  return std::strtod(std::string(buf, res.ptr).c_str(), nullptr);
}

[[noreturn]] void invalid(const std::string& field, const std::string& message) {
  throw Error(ErrorCode::validation, message, field);
}

double number_field(const json& j, const char* name, std::optional<double> fallback = std::nullopt) {
  if (!j.contains(name) || j[name].is_null()) {
    if (fallback) return *fallback;
    invalid(name, std::string("missing required field '") + name + "'");
  }
  if (!j[name].is_number()) invalid(name, std::string("field '") + name + "' must be a number");
  const double v = j[name].get<double>();
  if (!std::isfinite(v)) invalid(name, std::string("field '") + name + "' must be finite");
  return v;
}

std::string code_field(const json& j, const char* name, std::size_t min_len, std::size_t max_len) {
  if (!j.contains(name) || !j[name].is_string()) invalid(name, std::string("missing or non-string field '") + name + "'");
  std::string v = j[name].get<std::string>();
  const bool ok = v.size() >= min_len && v.size() <= max_len &&
                  std::all_of(v.begin(), v.end(), [](unsigned char c) { return std::isupper(c) || std::isdigit(c); });
  if (!ok) invalid(name, std::string("field '") + name + "' has an invalid code '" + v + "'");
  return v;
}

json observation_json(const std::string& airport, const WeatherObservation* o) {
  json j;
  j["airport"] = airport;
  if (!o) {
    j["observation"] = nullptr;
    return j;
  }
  j["station"] = o->station_id;
  j["date"] = format_iso_date(o->date);
  const auto values = o->values();
  for (std::size_t c = 0; c < kWeatherColumnCount; ++c) {
    if (values[c]) j[kWeatherFieldNames[c]] = tidy(*values[c]);
    else j[kWeatherFieldNames[c]] = nullptr;
  }
  return j;
}

struct DirSignature {
  std::vector<std::pair<std::string, fs::file_time_type>> files;
  bool operator==(const DirSignature&) const = default;
};

DirSignature signature_of(const fs::path& dir) {
  DirSignature s;
  std::error_code ec;
  for (fs::directory_iterator it(dir, ec), end; !ec && it != end; it.increment(ec))
    if (it->is_regular_file() && it->path().extension() == ".csv")
      s.files.emplace_back(it->path().filename().string(), it->last_write_time());
  std::sort(s.files.begin(), s.files.end());
  return s;
}

}  // namespace

// --- request / response ----------------------------------------------------------

PredictRequest PredictRequest::from_json(const std::string& text, int served_year) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::validation, std::string("request body is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::validation, "request body must be a JSON object");

  PredictRequest r;
  r.airline = code_field(j, "airline", 2, 3);
  r.origin = code_field(j, "origin", 3, 3);
  r.dest = code_field(j, "dest", 3, 3);

  if (!j.contains("date") || !j["date"].is_string()) invalid("date", "missing or non-string field 'date'");
  const auto date = parse_iso_date(j["date"].get<std::string>());
  if (!date) invalid("date", "invalid date '" + j["date"].get<std::string>() + "'");
  if (date->year != served_year)
    invalid("date", "date must fall in " + std::to_string(served_year));
  r.date = *date;

  int hhmm = -1;
  if (j.contains("crs_dep_time") && j["crs_dep_time"].is_number_integer()) {
    hhmm = j["crs_dep_time"].get<int>();
  } else if (j.contains("crs_dep_time") && j["crs_dep_time"].is_string()) {
    const auto s = j["crs_dep_time"].get<std::string>();
    if (!s.empty() && s.size() <= 4 && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); }))
      hhmm = std::stoi(s);
  }
  if (hhmm < 0 || hhmm > 2359 || hhmm % 100 > 59) invalid("crs_dep_time", "crs_dep_time must be an HHMM clock value");
  r.crs_dep_time = hhmm;

  r.distance = number_field(j, "distance");
  if (r.distance <= 0) invalid("distance", "distance must be positive");
  r.air_time = number_field(j, "air_time");
  if (r.air_time < 0) invalid("air_time", "air_time must be non-negative");
  r.prev_arr_delay = number_field(j, "prev_arr_delay", 0.0);
  if (j.contains("turnaround") && !j["turnaround"].is_null()) {
    if (!j["turnaround"].is_number_integer()) invalid("turnaround", "turnaround must be an integer number of minutes");
    r.turnaround = j["turnaround"].get<int>();
    if (*r.turnaround < 0 || *r.turnaround > 1440) invalid("turnaround", "turnaround must lie in 0..1440");
  }
  if (j.contains("tail_daily_delay") && !j["tail_daily_delay"].is_null())
    r.tail_daily_delay = number_field(j, "tail_daily_delay");
  if (j.contains("overrides") && !j["overrides"].is_null()) {
    const auto& o = j["overrides"];
    if (!o.is_object()) invalid("overrides", "overrides must be an object");
    for (const auto& [key, value] : o.items()) {
      const auto it = std::find_if(kWeatherFieldNames.begin(), kWeatherFieldNames.end(),
                                   [&](const char* n) { return key == n; });
      const std::string field = "overrides." + key;
      if (it == kWeatherFieldNames.end()) invalid(field, "unknown weather override '" + key + "'");
      if (value.is_null()) continue;
      if (!value.is_number() || !std::isfinite(value.get<double>())) invalid(field, "override must be a finite number");
      r.overrides[static_cast<std::size_t>(it - kWeatherFieldNames.begin())] = value.get<double>();
    }
  }
  return r;
}

const char* weather_source_name(WeatherSource s) noexcept {
  switch (s) {
    case WeatherSource::observed: return "observed";
    case WeatherSource::imputed: return "imputed";
    case WeatherSource::override_value: return "override";
  }
  return "imputed";
}

std::string PredictResponse::to_json() const {
  json j;
  j["model_probability"] = model_probability ? json(*model_probability) : json(nullptr);
  j["rule_probability"] = rule_probability;
  j["tier"] = std::string(tier_name(tier));
  j["tier_source"] = tier_from_model ? "model" : "rule";
  j["capped"] = rule.capped;
  j["base_rate"] = rule.base_rate;
  j["applied_multipliers"] = json::array();
  for (const auto& [c, m] : rule.applied)
    j["applied_multipliers"].push_back({{"condition", std::string(condition_name(c))}, {"multiplier", m}});
  json w = json::object();
  for (std::size_t c = 0; c < kWeatherColumnCount; ++c)
    w[kWeatherFieldNames[c]] = {{"value", tidy(weather[c])}, {"source", weather_source_name(weather_source[c])}};
  j["weather_used"] = std::move(w);
  if (feature_version) j["feature_version"] = feature_version;
  return j.dump();
}

// --- weather store ---------------------------------------------------------------

std::vector<const WeatherObservation*> WeatherSnapshot::station_rows(const std::string& station) const {
  std::vector<const WeatherObservation*> out;
  auto lo = std::lower_bound(observations.begin(), observations.end(), station,
                             [](const WeatherObservation& o, const std::string& s) { return o.station_id < s; });
  for (; lo != observations.end() && lo->station_id == station; ++lo) out.push_back(&*lo);
  return out;
}

WeatherStore::WeatherStore(std::vector<WeatherObservation> base) : base_(std::move(base)) { publish(base_); }

WeatherStore::~WeatherStore() { stop_polling(); }

void WeatherStore::publish(std::vector<WeatherObservation> observations) {
  std::stable_sort(observations.begin(), observations.end(), [](const auto& a, const auto& b) {
    return std::tie(a.station_id, a.date) < std::tie(b.station_id, b.date);
  });
  // Last occurrence of a (station, date) wins.
  std::vector<WeatherObservation> unique;
  unique.reserve(observations.size());
  for (auto& o : observations) {
    if (!unique.empty() && unique.back().station_id == o.station_id && unique.back().date == o.date)
      unique.back() = std::move(o);
    else
      unique.push_back(std::move(o));
  }
  auto snap = std::make_shared<WeatherSnapshot>();
  snap->observations = std::move(unique);
  snap->index = ObservationIndex(snap->observations);
  for (std::size_t c = 0; c < kWeatherColumnCount; ++c) {
    std::vector<double> column;
    for (const auto& o : snap->observations)
      if (auto v = o.values()[c]) column.push_back(*v);
    snap->medians.values[c] = lower_median(std::move(column)).value_or(0.0);
  }
  std::lock_guard lock(mutex_);
  current_ = std::move(snap);
}

std::shared_ptr<const WeatherSnapshot> WeatherStore::snapshot() const {
  std::lock_guard lock(mutex_);
  return current_;
}

std::size_t WeatherStore::refresh_from_directory(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  // publish() sorts stably, so among equal keys the later file wins.
  std::vector<WeatherObservation> merged = base_;
  for (const auto& f : files) {
    auto obs = load_observations(f);
    merged.insert(merged.end(), std::make_move_iterator(obs.begin()), std::make_move_iterator(obs.end()));
  }
  publish(std::move(merged));
  ++refreshes_;
  return files.size();
}

void WeatherStore::start_polling(const fs::path& dir, std::chrono::milliseconds interval) {
  stop_polling();
  {
    std::lock_guard lock(poll_mutex_);
    stop_ = false;
  }
  // Signature first: a file dropped during the initial read still differs.
  DirSignature initial = signature_of(dir);
  refresh_from_directory(dir);
  poller_ = std::thread([this, dir, interval, last = std::move(initial)]() mutable {
    std::unique_lock lock(poll_mutex_);
    while (!poll_cv_.wait_for(lock, interval, [this] { return stop_; })) {
      lock.unlock();
      const DirSignature now = signature_of(dir);
      if (!(now == last)) {
        try {
          refresh_from_directory(dir);
          last = now;
        } catch (const std::exception&) {
          // A half-written drop file; retry on the next tick.
        }
      }
      lock.lock();
    }
  });
}

void WeatherStore::stop_polling() {
  {
    std::lock_guard lock(poll_mutex_);
    stop_ = true;
  }
  poll_cv_.notify_all();
  if (poller_.joinable()) poller_.join();
}

// --- prediction service ----------------------------------------------------------

PredictionService::PredictionService(ServiceAssets assets, std::shared_ptr<WeatherStore> weather)
    : assets_(std::move(assets)), weather_(weather ? std::move(weather) : std::make_shared<WeatherStore>()) {
  assets_.risk.validate();
  if (assets_.model) {
    const int v = assets_.model->feature_version;
    if (v < 1 || v > 3) throw Error(ErrorCode::config, "model has no valid feature_version");
    if (!assets_.encoding) throw Error(ErrorCode::config, "a model needs category mappings");
    if (v >= 2 && !assets_.rates) throw Error(ErrorCode::config, "a version " + std::to_string(v) + " model needs a rate table");
  }
}

std::vector<double> PredictionService::feature_row(const PredictRequest& req, int version,
                                                   std::array<double, kWeatherColumnCount>* weather_used,
                                                   std::array<WeatherSource, kWeatherColumnCount>* sources) const {
  const auto snap = weather_->snapshot();
  const auto station = assets_.stations.station_for(req.origin);
  const WeatherObservation* obs = station ? snap->index.find(*station, req.date) : nullptr;
  const auto& weather_names = weather_feature_names();

  FlightRecord r;
  r.year = static_cast<std::int16_t>(req.date.year);
  r.quarter = static_cast<std::int8_t>(quarter_of(req.date.month));
  r.month = static_cast<std::int8_t>(req.date.month);
  r.day_of_month = static_cast<std::int8_t>(req.date.day);
  r.day_of_week = static_cast<std::int8_t>(day_of_week(req.date));
  r.airline = req.airline;
  r.origin = req.origin;
  r.dest = req.dest;
  r.air_time = static_cast<float>(req.air_time);
  r.distance = static_cast<float>(req.distance);
  r.crs_dep_time = static_cast<std::int16_t>(req.crs_dep_time);

  std::array<double, kWeatherColumnCount> used{};
  std::array<WeatherSource, kWeatherColumnCount> src{};
  for (std::size_t c = 0; c < kWeatherColumnCount; ++c) {
    if (req.overrides[c]) {
      used[c] = *req.overrides[c];
      src[c] = WeatherSource::override_value;
    } else if (obs && obs->values()[c]) {
      used[c] = *obs->values()[c];
      src[c] = WeatherSource::observed;
    } else {
      auto m = assets_.feature_medians.find(weather_names[c]);
      used[c] = m != assets_.feature_medians.end() ? m->second : snap->medians.values[c];
      src[c] = WeatherSource::imputed;
    }
    r.weather[c] = static_cast<float>(used[c]);
  }
  if (weather_used) *weather_used = used;
  if (sources) *sources = src;

  const int dep_min = hhmm_to_minutes(req.crs_dep_time);
  PropagationFeatures prop;
  if (req.turnaround) {
    PredecessorContext pred;
    pred.arr_delay = req.prev_arr_delay;
    pred.scheduled_arrival_min = ((dep_min - *req.turnaround) % 1440 + 1440) % 1440;
    pred.accumulated_delay = req.tail_daily_delay.value_or(req.prev_arr_delay);
    prop = propagation_from(&pred, dep_min);
  }

  static const RateTable kNoRates;
  const auto values = build_feature_row(version, r, prop, assets_.rates ? *assets_.rates : kNoRates);
  const auto& names = feature_names(version);
  std::vector<double> row(values.size());
  for (std::size_t c = 0; c < values.size(); ++c) {
    if (const auto* s = std::get_if<std::string>(&values[c])) {
      row[c] = assets_.encoding ? assets_.encoding->encode(names[c], *s) : EncodingMap::kUnknown;
      continue;
    }
    row[c] = std::get<double>(values[c]);
    if (std::isnan(row[c])) {
      auto m = assets_.feature_medians.find(names[c]);
      if (m == assets_.feature_medians.end())
        throw Error(ErrorCode::config, "no imputation value for feature '" + names[c] + "'");
      row[c] = m->second;
    }
  }
  return row;
}

PredictResponse PredictionService::predict(const PredictRequest& req) const {
  PredictResponse resp;
  const int version = assets_.model ? assets_.model->feature_version : 3;
  const auto row = feature_row(req, version, &resp.weather, &resp.weather_source);

  FlightContext flight{req.origin, req.crs_dep_time, day_of_week(req.date), req.prev_arr_delay};
  WeatherReading reading{resp.weather[0], resp.weather[1], resp.weather[2], resp.weather[3], resp.weather[4]};
  resp.rule = compound_risk(detect_conditions(flight, reading), assets_.risk);
  resp.rule_probability = resp.rule.probability;
  resp.tier = resp.rule.tier;

  if (assets_.model) {
    resp.feature_version = version;
    try {
      resp.model_probability = score(feature_names(version), row, *assets_.model);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::shape) throw Error(ErrorCode::config, std::string("model manifest mismatch: ") + e.what());
      throw;
    }
    resp.tier = tier(*resp.model_probability);
    resp.tier_from_model = true;
  }
  return resp;
}

std::vector<double> PredictionService::score_instances(const std::vector<std::string>& columns,
                                                       const std::vector<std::vector<double>>& rows) const {
  if (!assets_.model) throw Error(ErrorCode::config, "no model loaded");
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out.push_back(score(columns, rows[i], *assets_.model, i));
  return out;
}

std::string PredictionService::station_or_throw(const std::string& airport) const {
  if (auto s = assets_.stations.station_for(airport)) return *s;
  std::string supported;
  for (const auto& [iata, st] : assets_.stations.entries()) supported += (supported.empty() ? "" : ", ") + iata;
  throw Error(ErrorCode::not_found, "unsupported airport '" + airport + "'; supported: " + supported, "airport");
}

std::string PredictionService::weather_json(const std::string& airport) const {
  const auto station = station_or_throw(airport);
  const auto snap = weather_->snapshot();
  const auto rows = snap->station_rows(station);
  return observation_json(airport, rows.empty() ? nullptr : rows.back()).dump();
}

std::string PredictionService::all_weather_json() const {
  const auto snap = weather_->snapshot();
  json arr = json::array();
  for (const auto& [iata, station] : assets_.stations.entries()) {
    const auto rows = snap->station_rows(station);
    arr.push_back(observation_json(iata, rows.empty() ? nullptr : rows.back()));
  }
  return arr.dump();
}

std::string PredictionService::recent_weather_json(const std::string& airport, int days) const {
  if (days < 1) throw Error(ErrorCode::validation, "days must be positive", "days");
  const auto station = station_or_throw(airport);
  const auto snap = weather_->snapshot();
  const auto rows = snap->station_rows(station);
  const std::size_t n = std::min<std::size_t>(rows.size(), static_cast<std::size_t>(days));
  json arr = json::array();
  for (std::size_t i = rows.size() - n; i < rows.size(); ++i) arr.push_back(observation_json(airport, rows[i]));
  return arr.dump();
}

// --- HTTP --------------------------------------------------------------------------

int http_status_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::validation:
    case ErrorCode::invalid_argument:
    case ErrorCode::parse:
    case ErrorCode::domain:
      return 400;
    case ErrorCode::not_found:
      return 404;
    default:
      return 500;
  }
}

std::string error_body(ErrorCode code, const std::string& message, const std::string& field) {
  json j;
  j["error"] = error_code_name(code);
  j["message"] = message;
  if (!field.empty()) j["field"] = field;
  return j.dump();
}

struct HttpServer::Impl {
  std::shared_ptr<PredictionService> service;
  httplib::Server server;
  std::thread thread;

  template <typename F>
  void guarded(httplib::Response& res, F&& body) {
    try {
      res.set_content(body(), "application/json");
      res.status = 200;
    } catch (const Error& e) {
      res.status = http_status_for(e.code());
      res.set_content(error_body(e.code(), e.what(), e.field()), "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(error_body(ErrorCode::internal, e.what()), "application/json");
    }
  }

  void routes() {
    server.Post("/predict", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto request = PredictRequest::from_json(req.body, service->assets().year);
        return service->predict(request).to_json();
      });
    });
    server.Post("/score", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        std::vector<std::string> columns;
        std::vector<std::vector<double>> rows;
        try {
          const json j = json::parse(req.body);
          columns = j.at("columns").get<std::vector<std::string>>();
          rows = j.at("instances").get<std::vector<std::vector<double>>>();
        } catch (const json::exception& e) {
          throw Error(ErrorCode::validation, std::string("bad score request: ") + e.what());
        }
        json out;
        out["predictions"] = service->score_instances(columns, rows);
        return out.dump();
      });
    });
    server.Get("/weather", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] { return service->all_weather_json(); });
    });
    server.Get(R"(/weather/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { return service->weather_json(req.matches[1]); });
    });
    server.Get(R"(/weather/([^/]+)/recent)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        int days = 7;
        if (req.has_param("days")) {
          const auto s = req.get_param_value("days");
          try {
            std::size_t used = 0;
            days = std::stoi(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
          } catch (const std::exception&) {
            throw Error(ErrorCode::validation, "days must be an integer", "days");
          }
        }
        return service->recent_weather_json(req.matches[1], days);
      });
    });
    server.Get("/metrics", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] { return service->metrics_json(); });
    });
    server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"status":"ok"})", "application/json");
    });
  }
};

HttpServer::HttpServer(std::shared_ptr<PredictionService> service) : impl_(std::make_unique<Impl>()) {
  impl_->service = std::move(service);
  impl_->routes();
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) bound = impl_->server.bind_to_any_port(host);
  else if (!impl_->server.bind_to_port(host, port)) bound = -1;
  if (bound <= 0) throw Error(ErrorCode::io, "cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void HttpServer::run(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) throw Error(ErrorCode::io, "cannot listen on " + host + ":" + std::to_string(port));
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace flightsense
