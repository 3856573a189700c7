#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "flightsense/calendar.hpp"
#include "flightsense/dataset.hpp"
#include "flightsense/error.hpp"
#include "flightsense/features.hpp"
#include "flightsense/scoring.hpp"
#include "flightsense/trainer.hpp"
#include "flightsense/weather.hpp"

namespace flightsense {

// Short names used on the wire, in WeatherValues order.
inline constexpr std::array<const char*, kWeatherColumnCount> kWeatherFieldNames = {
    "wind", "precip", "snow", "tmax", "tmin"};

struct PredictRequest {
  std::string airline;
  std::string origin;
  std::string dest;
  Date date{};
  int crs_dep_time = 0;  // HHMM
  double distance = 0;
  double air_time = 0;
  double prev_arr_delay = 0;
  std::optional<int> turnaround;  // present = the aircraft arrives from an earlier leg that day
  std::optional<double> tail_daily_delay;
  std::array<std::optional<double>, kWeatherColumnCount> overrides{};

  // Throws Error(validation) naming the offending field.
  static PredictRequest from_json(const std::string& text, int served_year);
};

enum class WeatherSource { observed, imputed, override_value };
const char* weather_source_name(WeatherSource s) noexcept;

struct PredictResponse {
  std::optional<double> model_probability;
  double rule_probability = 0;
  Tier tier = Tier::on_time;
  bool tier_from_model = false;
  RiskEstimate rule;
  std::array<double, kWeatherColumnCount> weather{};
  std::array<WeatherSource, kWeatherColumnCount> weather_source{};
  int feature_version = 0;

  std::string to_json() const;
};

// Immutable view of the observation table.
struct WeatherSnapshot {
  std::vector<WeatherObservation> observations;  // sorted by (station, date)
  ObservationIndex index;
  ImputationMedians medians;  // over all stored observations

  // Observations of one station, oldest first.
  std::vector<const WeatherObservation*> station_rows(const std::string& station) const;
};

// Observation table with snapshot semantics: readers hold a shared_ptr to an
// immutable snapshot; refreshes build a new one and swap it in.
class WeatherStore {
 public:
  WeatherStore() : WeatherStore(std::vector<WeatherObservation>{}) {}
  explicit WeatherStore(std::vector<WeatherObservation> base);
  ~WeatherStore();

  std::shared_ptr<const WeatherSnapshot> snapshot() const;

  // Base observations overlaid with every *.csv in dir (name order, later
  // rows win). Returns the number of files read.
  std::size_t refresh_from_directory(const std::filesystem::path& dir);

  // Re-reads dir whenever its file listing or mtimes change.
  void start_polling(const std::filesystem::path& dir, std::chrono::milliseconds interval);
  void stop_polling();
  std::size_t refresh_count() const noexcept { return refreshes_.load(); }

 private:
  void publish(std::vector<WeatherObservation> observations);

  std::vector<WeatherObservation> base_;
  mutable std::mutex mutex_;
  std::shared_ptr<const WeatherSnapshot> current_;
  std::atomic<std::size_t> refreshes_{0};

  std::thread poller_;
  std::mutex poll_mutex_;
  std::condition_variable_any poll_cv_;
  bool stop_ = false;
};

struct ServiceAssets {
  std::optional<LinearModel> model;
  std::optional<EncodingMap> encoding;
  std::optional<RateTable> rates;
  std::map<std::string, double> feature_medians;  // imputation_medians.json
  RiskConfig risk;
  StationMap stations = StationMap::defaults();
  std::string metrics_json = "[]";
  int year = 2018;
};

class PredictionService {
 public:
  // Throws Error(config) when a loaded model lacks the mappings or rates it needs.
  PredictionService(ServiceAssets assets, std::shared_ptr<WeatherStore> weather);

  PredictResponse predict(const PredictRequest& request) const;

  // Feature row (version order) for the request, exactly as the model sees it.
  std::vector<double> feature_row(const PredictRequest& request, int version,
                                  std::array<double, kWeatherColumnCount>* weather_used = nullptr,
                                  std::array<WeatherSource, kWeatherColumnCount>* sources = nullptr) const;

  // Raw rows in the given column order, scored by the loaded model.
  std::vector<double> score_instances(const std::vector<std::string>& columns,
                                      const std::vector<std::vector<double>>& rows) const;

  std::string weather_json(const std::string& airport) const;
  std::string all_weather_json() const;
  std::string recent_weather_json(const std::string& airport, int days) const;
  const std::string& metrics_json() const noexcept { return assets_.metrics_json; }

  const ServiceAssets& assets() const noexcept { return assets_; }
  WeatherStore& weather_store() noexcept { return *weather_; }

 private:
  std::string station_or_throw(const std::string& airport) const;

  ServiceAssets assets_;
  std::shared_ptr<WeatherStore> weather_;
};

// JSON-over-HTTP front end. Endpoints: POST /predict, POST /score,
// GET /weather, GET /weather/{airport}, GET /weather/{airport}/recent?days=N,
// GET /metrics, GET /health.
class HttpServer {
 public:
  explicit HttpServer(std::shared_ptr<PredictionService> service);
  ~HttpServer();

  // Binds and serves on a background thread; port 0 picks a free port.
  // Returns the bound port.
  int start(const std::string& host, int port);
  // Binds and serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// HTTP status for an error code: 400 for bad input, 404 for not found, 500 otherwise.
int http_status_for(ErrorCode code) noexcept;
std::string error_body(ErrorCode code, const std::string& message, const std::string& field = {});

}  // namespace flightsense
