#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "flightsense/dataset.hpp"

namespace flightsense {

// --- rule engine -----------------------------------------------------------------

// Canonical order; audit trails list multipliers in this order.
enum class Condition {
  high_delay_airport,
  high_wind,
  heavy_precip,
  any_snow,
  peak_hours,
  friday_or_sunday,
  prev_aircraft_delayed,
};
inline constexpr std::size_t kConditionCount = 7;

std::string_view condition_name(Condition c) noexcept;
Condition condition_from_name(std::string_view name);

struct RiskConditions {
  std::array<bool, kConditionCount> active{};

  bool operator[](Condition c) const noexcept { return active[static_cast<std::size_t>(c)]; }
  void set(Condition c, bool on = true) noexcept { active[static_cast<std::size_t>(c)] = on; }
};

struct FlightContext {
  std::string origin;
  int crs_dep_time = 0;  // HHMM
  int day_of_week = 1;   // 1 = Monday .. 7 = Sunday
  double prev_arr_delay = 0;
};

struct WeatherReading {
  double wind = 0;    // mph
  double precip = 0;  // inches
  double snow = 0;    // inches
  double tmax = 0;
  double tmin = 0;
};

RiskConditions detect_conditions(const FlightContext& flight, const WeatherReading& weather);

struct RiskConfig {
  double base = 0.19;
  double cap = 0.85;
  std::array<double, kConditionCount> multipliers = {1.25, 1.20, 1.35, 2.10, 1.15, 1.10, 1.30};

  double multiplier(Condition c) const noexcept { return multipliers[static_cast<std::size_t>(c)]; }
  // Throws Error(config) for a non-positive multiplier or base/cap outside [0,1].
  void validate() const;

  // {"base": 0.19, "cap": 0.85, "multipliers": {"high_delay_airport": 1.25, ...}}
  std::string to_json() const;
  static RiskConfig from_json(const std::string& text);
  static RiskConfig load(const std::filesystem::path& path);
};

enum class Tier { high, moderate, low, on_time };

std::string_view tier_name(Tier t) noexcept;
Tier tier(double probability);

struct RiskEstimate {
  double probability = 0;
  double base_rate = 0;
  std::vector<std::pair<Condition, double>> applied;
  bool capped = false;
  Tier tier = Tier::on_time;
};

RiskEstimate compound_risk(const RiskConditions& conditions, const RiskConfig& config);

// --- model scorers ---------------------------------------------------------------

// A probability source over rows laid out in manifest() order.
class Scorer {
 public:
  virtual ~Scorer() = default;

  virtual const std::vector<std::string>& manifest() const = 0;

  // row_id is the row's position in the scored table; content-based scorers ignore it.
  virtual double score_row(std::span<const double> row, std::size_t row_id) const = 0;

  // Scores rows [first, first + count) of m. The default scores row by row.
  virtual std::vector<double> score_rows(const NumericMatrix& m, std::size_t first,
                                         std::size_t count) const;
};

// Reorders named values into manifest order. Throws Error(shape) listing the
// missing and extra columns.
std::vector<double> align_to_manifest(const std::vector<std::string>& names,
                                      std::span<const double> values,
                                      const std::vector<std::string>& manifest);

// Throws Error(shape) unless m's columns equal the scorer's manifest.
void check_manifest(const NumericMatrix& m, const Scorer& scorer);

double score(const std::vector<std::string>& names, std::span<const double> values,
             const Scorer& scorer, std::size_t row_id = 0);

// Stored predictions, one per line (a header line "prediction" is allowed).
class FilePredictionScorer : public Scorer {
 public:
  FilePredictionScorer(std::vector<double> predictions, std::vector<std::string> manifest);
  static FilePredictionScorer load(const std::filesystem::path& path,
                                   std::vector<std::string> manifest);

  const std::vector<std::string>& manifest() const override { return manifest_; }
  double score_row(std::span<const double> row, std::size_t row_id) const override;

 private:
  std::vector<double> predictions_;
  std::vector<std::string> manifest_;
};

// POSTs {"columns": [...], "instances": [[...], ...]} to <base_url><path> and
// reads {"predictions": [...]}.
class RemoteHttpScorer : public Scorer {
 public:
  RemoteHttpScorer(std::string base_url, std::vector<std::string> manifest,
                   std::string path = "/score");

  const std::vector<std::string>& manifest() const override { return manifest_; }
  double score_row(std::span<const double> row, std::size_t row_id) const override;
  std::vector<double> score_rows(const NumericMatrix& m, std::size_t first,
                                 std::size_t count) const override;

 private:
  std::vector<double> post(const std::vector<std::vector<double>>& rows) const;

  std::string base_url_;
  std::vector<std::string> manifest_;
  std::string path_;
};

}  // namespace flightsense
