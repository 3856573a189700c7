#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "flightsense/ingest.hpp"

namespace flightsense {

// Minutes since midnight for an HHMM clock in 0..2359.
int hhmm_to_minutes(int hhmm);

// Aircraft-day: the grouping key of a rotation chain.
struct ChainKey {
  std::string_view tail_number;
  int month;
  int day_of_month;

  auto operator<=>(const ChainKey&) const = default;
};

ChainKey chain_key(const FlightRecord& r);

// Stable sort on (tail, month, day, crs_dep_time).
void sort_chains(std::vector<FlightRecord>& records);

// Number of adjacent pairs that violate chain order; 0 for sort_chains output.
std::size_t chain_order_violations(std::span<const FlightRecord> records);

struct PropagationFeatures {
  double prev_arr_delay = 0;
  std::int8_t prev_was_delayed = 0;
  std::int16_t turnaround = 0;
  std::int8_t tight_turnaround = 0;
  std::int8_t is_first_flight = 1;
  double tail_daily_delay = 0;

  bool operator==(const PropagationFeatures&) const = default;
};

inline constexpr double kDelayThresholdMinutes = 15.0;
inline constexpr int kTightTurnaroundMinutes = 45;
inline constexpr int kOvernightCorrectionMinutes = -60;

// Propagation features for one leg whose same-aircraft-day predecessor context
// is already known. Used by the chain pass and by the serving path.
struct PredecessorContext {
  double arr_delay = 0;          // null inbound delay counts as 0
  int scheduled_arrival_min = 0;
  bool arrival_known = true;
  double accumulated_delay = 0;  // sum of arr_delay over all earlier legs that day
};

PropagationFeatures propagation_from(const PredecessorContext* predecessor, int dep_minutes);

// One pass over chain-ordered records. Throws Error(contract) on unsorted input.
std::vector<PropagationFeatures> compute_propagation(std::span<const FlightRecord> records);

struct TimeFeatures {
  int dep_hour = 0;
  std::int8_t is_peak_hour = 0;
  std::int8_t is_early_morning = 0;
};

TimeFeatures compute_time_features(int crs_dep_time);
bool is_peak_hour(int dep_hour) noexcept;

// Historical delay rates keyed on raw (pre-encoding) codes.
class RateTable {
 public:
  struct Counts {
    std::uint64_t delayed = 0;
    std::uint64_t total = 0;
  };

  // Throws Error(invalid_argument) on empty input or records without targets.
  static RateTable build(std::span<const FlightRecord> records);

  // Adds another table's counts (associative; used for sharded builds).
  void merge(const RateTable& other);

  // Unseen keys fall back to the global rate.
  double route_rate(std::string_view origin, std::string_view dest) const;
  double airline_rate(std::string_view airline) const;
  double global_rate() const noexcept { return global_rate_; }

  const std::map<std::string, double, std::less<>>& route_rates() const noexcept { return route_rates_; }
  const std::map<std::string, double, std::less<>>& airline_rates() const noexcept { return airline_rates_; }

  // {"global": r, "routes": {"JFK-LAX": r}, "airlines": {"AA": r}}
  std::string to_json() const;
  static RateTable from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static RateTable load(const std::filesystem::path& path);

  static std::string route_key(std::string_view origin, std::string_view dest);

 private:
  void finalize();

  // Counts are empty for tables restored from JSON.
  std::map<std::string, Counts, std::less<>> route_counts_;
  std::map<std::string, Counts, std::less<>> airline_counts_;
  Counts global_counts_;
  std::map<std::string, double, std::less<>> route_rates_;
  std::map<std::string, double, std::less<>> airline_rates_;
  double global_rate_ = 0;
};

bool is_holiday(int version, int month, int day);

// Column names of each feature version, in output order (target excluded).
const std::vector<std::string>& feature_names(int version);
inline constexpr std::string_view kTargetName = "ArrDel15";
const std::vector<std::string>& categorical_columns();
const std::vector<std::string>& weather_feature_names();
bool is_categorical(std::string_view column);

// Columns that must never reach a model.
const std::vector<std::string>& leakage_columns();
const std::vector<std::string>& dropped_columns();

using FeatureValue = std::variant<double, std::string>;

// Builds one feature row; shared by offline assembly and the serving path.
// Missing numeric inputs become NaN and are imputed after the split.
std::vector<FeatureValue> build_feature_row(int version, const FlightRecord& record,
                                            const PropagationFeatures& propagation,
                                            const RateTable& rates);

struct FeatureColumn {
  std::string name;
  bool categorical = false;
  std::vector<double> numeric;
  std::vector<std::string> labels;
};

struct FeatureMatrix {
  int version = 0;
  std::vector<double> target;
  std::vector<FeatureColumn> columns;

  std::size_t rows() const noexcept { return target.size(); }
  const FeatureColumn& column(std::string_view name) const;
};

// records must be chain-ordered with matching propagation rows.
FeatureMatrix assemble_features(int version, std::span<const FlightRecord> records,
                                std::span<const PropagationFeatures> propagation,
                                const RateTable& rates);

// Header CSV: ArrDel15 first, then the version's columns; NaN as an empty cell.
void write_feature_matrix(const FeatureMatrix& m, const std::filesystem::path& path);
FeatureMatrix read_feature_matrix(const std::filesystem::path& path);

struct FeatureBuild {
  FeatureMatrix matrix;
  RateTable rates;
};

// sort -> propagation -> rates -> assembly over a cleaned corpus.
FeatureBuild build_features(int version, std::vector<FlightRecord> records);

}  // namespace flightsense
