#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace flightsense {

// Origin-airport weather attached by the weather join, in the order
// origin_wind, origin_precip, origin_snow, origin_tmax, origin_tmin.
inline constexpr std::size_t kWeatherColumnCount = 5;
using WeatherValues = std::array<std::optional<float>, kWeatherColumnCount>;

// One on-time-performance row reduced to the retained schema. Numeric fields
// use the narrow widths they are checkpointed with; an empty string means a
// missing code.
struct FlightRecord {
  std::optional<std::int16_t> year;
  std::optional<std::int8_t> quarter;
  std::optional<std::int8_t> month;
  std::optional<std::int8_t> day_of_month;
  std::optional<std::int8_t> day_of_week;
  std::string airline;
  std::string origin;
  std::string dest;
  std::optional<float> air_time;
  std::optional<float> distance;
  std::string tail_number;
  std::optional<std::int8_t> arr_del15;
  std::optional<float> arr_delay;
  std::optional<float> dep_delay;
  std::optional<std::int16_t> crs_dep_time;  // HHMM, 2400 normalized to 2359
  std::optional<std::int16_t> crs_arr_time;
  std::optional<std::int16_t> dep_time;
  std::optional<std::int8_t> cancelled;
  WeatherValues weather{};

  bool operator==(const FlightRecord&) const = default;
};

// BTS header names of the 17 retained columns, in checkpoint order.
const std::vector<std::string_view>& retained_columns();
inline constexpr std::string_view kCancelledColumn = "Cancelled";

struct ParseStats {
  std::size_t rows = 0;
  std::size_t skipped_columns = 0;
  std::size_t null_cells = 0;  // numeric cells that were empty or unparseable
};

// Parses one header-bearing monthly file. Extra columns are skipped;
// a missing retained column throws Error(schema) naming it.
std::vector<FlightRecord> parse_month(std::istream& csv, ParseStats* stats = nullptr);

// HHMM cell to narrow clock value: 2400 -> 2359; invalid clock -> nullopt.
std::optional<std::int16_t> parse_hhmm(std::string_view text);

struct CleanStats {
  std::size_t input = 0;
  std::size_t missing_target = 0;
  std::size_t missing_tail = 0;
  std::size_t missing_dep_time = 0;
  std::size_t cancelled = 0;
  std::size_t invalid_calendar = 0;
  std::size_t kept = 0;

  std::size_t dropped() const noexcept {
    return missing_target + missing_tail + missing_dep_time + cancelled + invalid_calendar;
  }
};

// Drops rows in a fixed order (target, tail, dep time, cancelled, calendar)
// and counts each row under the first filter that rejected it.
std::vector<FlightRecord> clean(std::vector<FlightRecord> records, CleanStats* stats = nullptr,
                                int year = 2018);

// --- checkpoints -----------------------------------------------------------

inline constexpr std::uint16_t kCheckpointVersion = 1;

enum class ColumnType : std::uint8_t { i8 = 0, i16 = 1, f32 = 2, str = 3 };

struct ColumnInfo {
  std::string name;
  ColumnType type;
  bool nullable;

  bool operator==(const ColumnInfo&) const = default;
};

struct Checkpoint {
  int month = 0;
  std::uint16_t format_version = kCheckpointVersion;
  std::vector<ColumnInfo> columns;
  std::vector<FlightRecord> records;

  bool has_weather() const noexcept { return columns.size() > 18; }
};

// Writes records (all from `month`) to path. Weather columns are included
// when with_weather is set.
Checkpoint write_checkpoint(const std::vector<FlightRecord>& records, int month,
                            const std::filesystem::path& path, bool with_weather = false);

Checkpoint read_checkpoint(const std::filesystem::path& path);

std::filesystem::path checkpoint_name(int month);

// Checkpoints in a directory, ordered by month.
std::vector<std::filesystem::path> list_checkpoints(const std::filesystem::path& dir);

// Reads and concatenates checkpoints in month order.
std::vector<FlightRecord> load_checkpoints(const std::filesystem::path& dir,
                                           bool* all_have_weather = nullptr);

// --- directory driver ------------------------------------------------------

struct IngestFileReport {
  std::string file;
  int month = 0;
  ParseStats parse;
  CleanStats clean;
};

struct IngestSummary {
  std::vector<IngestFileReport> files;
  std::vector<std::string> skipped_files;
  CleanStats totals;
};

struct IngestOptions {
  int first_month = 1;
  int last_month = 12;
  int year = 2018;
  unsigned workers = 1;  // one file per worker
};

// Parses, cleans and checkpoints every flight CSV in in_dir, one file at a
// time. A CSV counts as a flight file when its header names any retained
// column.
IngestSummary ingest_directory(const std::filesystem::path& in_dir,
                               const std::filesystem::path& out_dir,
                               const IngestOptions& options = {});

}  // namespace flightsense
