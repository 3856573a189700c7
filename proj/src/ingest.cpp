#include "flightsense/ingest.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <future>
#include <map>
#include <mutex>
#include <set>
#include <type_traits>

#include "flightsense/calendar.hpp"
#include "flightsense/csv.hpp"
#include "flightsense/error.hpp"

namespace flightsense {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

const std::vector<std::string_view>& retained_columns() {
  static const std::vector<std::string_view> kColumns = {
      "Year",          "Quarter",  "Month",    "DayofMonth", "DayOfWeek", "Reporting_Airline",
      "Origin",        "Dest",     "AirTime",  "Distance",   "Tail_Number", "ArrDel15",
      "ArrDelay",      "DepDelay", "CRSDepTime", "CRSArrTime", "DepTime"};
  return kColumns;
}

namespace {

enum Col {
  kYear, kQuarter, kMonth, kDay, kDow, kAirline, kOrigin, kDest, kAirTime, kDistance,
  kTail, kArrDel15, kArrDelay, kDepDelay, kCrsDep, kCrsArr, kDepTime, kCancelled
};

template <class Int>
std::optional<Int> parse_integral(std::string_view text, long lo, long hi) {
  auto v = csv::parse_double(text);
  if (!v || std::trunc(*v) != *v || *v < lo || *v > hi) return std::nullopt;
  return static_cast<Int>(*v);
}

std::optional<float> parse_float(std::string_view text) {
  auto v = csv::parse_double(text);
  if (!v) return std::nullopt;
  return static_cast<float>(*v);
}

std::string trimmed(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::optional<std::int16_t> parse_hhmm(std::string_view text) {
  auto v = parse_integral<std::int16_t>(text, 0, 2400);
  if (!v) return std::nullopt;
  if (*v == 2400) return std::int16_t{2359};
  if (*v % 100 > 59) return std::nullopt;
  return v;
}

std::vector<FlightRecord> parse_month(std::istream& in, ParseStats* stats) {
  csv::Reader reader(in);
  std::vector<std::string> row;
  if (!reader.next(row)) throw Error(ErrorCode::schema, "flight file has no header row");

  std::vector<std::string_view> wanted = retained_columns();
  wanted.push_back(kCancelledColumn);
  const auto index = csv::locate_columns(row, wanted);
  for (std::size_t i = 0; i < retained_columns().size(); ++i)
    if (!index[i])
      throw Error(ErrorCode::schema,
                  "missing required column '" + std::string(retained_columns()[i]) + "'");

  ParseStats local;
  std::size_t present = 0;
  for (const auto& idx : index) present += idx.has_value();
  local.skipped_columns = row.size() - present;

  const std::size_t header_width = row.size();
  std::vector<FlightRecord> records;
  while (reader.next(row)) {
    if (row.size() == 1 && row[0].empty()) continue;  // blank line
    if (row.size() != header_width)
      throw Error(ErrorCode::parse, "line " + std::to_string(reader.line()) + ": expected " +
                                        std::to_string(header_width) + " fields, found " +
                                        std::to_string(row.size()));
    auto cell = [&](int col) -> const std::string& { return row[*index[col]]; };
    auto count_null = [&](const auto& opt) { local.null_cells += !opt.has_value(); };

    FlightRecord r;
    r.year = parse_integral<std::int16_t>(cell(kYear), 1900, 2100);
    r.quarter = parse_integral<std::int8_t>(cell(kQuarter), 1, 4);
    r.month = parse_integral<std::int8_t>(cell(kMonth), 1, 12);
    r.day_of_month = parse_integral<std::int8_t>(cell(kDay), 1, 31);
    r.day_of_week = parse_integral<std::int8_t>(cell(kDow), 1, 7);
    r.airline = trimmed(cell(kAirline));
    r.origin = trimmed(cell(kOrigin));
    r.dest = trimmed(cell(kDest));
    r.air_time = parse_float(cell(kAirTime));
    r.distance = parse_float(cell(kDistance));
    r.tail_number = trimmed(cell(kTail));
    r.arr_del15 = parse_integral<std::int8_t>(cell(kArrDel15), 0, 1);
    r.arr_delay = parse_float(cell(kArrDelay));
    r.dep_delay = parse_float(cell(kDepDelay));
    r.crs_dep_time = parse_hhmm(cell(kCrsDep));
    r.crs_arr_time = parse_hhmm(cell(kCrsArr));
    r.dep_time = parse_hhmm(cell(kDepTime));
    if (index[kCancelled]) r.cancelled = parse_integral<std::int8_t>(cell(kCancelled), 0, 1);

    count_null(r.year);
    count_null(r.arr_del15);
    count_null(r.arr_delay);
    count_null(r.crs_dep_time);
    records.push_back(std::move(r));
  }
  local.rows = records.size();
  if (stats) *stats = local;
  return records;
}

std::vector<FlightRecord> clean(std::vector<FlightRecord> records, CleanStats* stats, int year) {
  CleanStats local;
  local.input = records.size();
  std::erase_if(records, [&](const FlightRecord& r) {
    if (!r.arr_del15) return ++local.missing_target, true;
    if (r.tail_number.empty()) return ++local.missing_tail, true;
    if (!r.crs_dep_time) return ++local.missing_dep_time, true;
    if (r.cancelled && *r.cancelled == 1) return ++local.cancelled, true;
    if (!r.month || !r.day_of_month || !is_valid_date(year, *r.month, *r.day_of_month))
      return ++local.invalid_calendar, true;
    return false;
  });
  local.kept = records.size();
  if (stats) *stats = local;
  return records;
}

// --- checkpoint format -------------------------------------------------------
//
// "FSCK" | u16 version | u8 month | u8 flags | u64 record_count | u16 ncols
// ncols x { u8 name_len | name | u8 type | u8 nullable | u64 offset | u64 size }
// payload: per column, a validity bitmap (LSB-first, ceil(n/8) bytes) when
// nullable, then n fixed-width values or, for strings, u32 offsets[n+1] + bytes.
// Offsets are absolute file positions. Little-endian throughout.

namespace {

constexpr char kMagic[4] = {'F', 'S', 'C', 'K'};
constexpr std::uint8_t kFlagWeather = 1;

template <class Fn>
void for_each_column(bool with_weather, Fn&& fn) {
  fn(ColumnInfo{"Year", ColumnType::i16, true}, [](auto& r) -> auto& { return r.year; });
  fn(ColumnInfo{"Quarter", ColumnType::i8, true}, [](auto& r) -> auto& { return r.quarter; });
  fn(ColumnInfo{"Month", ColumnType::i8, true}, [](auto& r) -> auto& { return r.month; });
  fn(ColumnInfo{"DayofMonth", ColumnType::i8, true}, [](auto& r) -> auto& { return r.day_of_month; });
  fn(ColumnInfo{"DayOfWeek", ColumnType::i8, true}, [](auto& r) -> auto& { return r.day_of_week; });
  fn(ColumnInfo{"Reporting_Airline", ColumnType::str, false}, [](auto& r) -> auto& { return r.airline; });
  fn(ColumnInfo{"Origin", ColumnType::str, false}, [](auto& r) -> auto& { return r.origin; });
  fn(ColumnInfo{"Dest", ColumnType::str, false}, [](auto& r) -> auto& { return r.dest; });
  fn(ColumnInfo{"AirTime", ColumnType::f32, true}, [](auto& r) -> auto& { return r.air_time; });
  fn(ColumnInfo{"Distance", ColumnType::f32, true}, [](auto& r) -> auto& { return r.distance; });
  fn(ColumnInfo{"Tail_Number", ColumnType::str, false}, [](auto& r) -> auto& { return r.tail_number; });
  fn(ColumnInfo{"ArrDel15", ColumnType::i8, true}, [](auto& r) -> auto& { return r.arr_del15; });
  fn(ColumnInfo{"ArrDelay", ColumnType::f32, true}, [](auto& r) -> auto& { return r.arr_delay; });
  fn(ColumnInfo{"DepDelay", ColumnType::f32, true}, [](auto& r) -> auto& { return r.dep_delay; });
  fn(ColumnInfo{"CRSDepTime", ColumnType::i16, true}, [](auto& r) -> auto& { return r.crs_dep_time; });
  fn(ColumnInfo{"CRSArrTime", ColumnType::i16, true}, [](auto& r) -> auto& { return r.crs_arr_time; });
  fn(ColumnInfo{"DepTime", ColumnType::i16, true}, [](auto& r) -> auto& { return r.dep_time; });
  fn(ColumnInfo{"Cancelled", ColumnType::i8, true}, [](auto& r) -> auto& { return r.cancelled; });
  if (!with_weather) return;
  fn(ColumnInfo{"origin_wind", ColumnType::f32, true}, [](auto& r) -> auto& { return r.weather[0]; });
  fn(ColumnInfo{"origin_precip", ColumnType::f32, true}, [](auto& r) -> auto& { return r.weather[1]; });
  fn(ColumnInfo{"origin_snow", ColumnType::f32, true}, [](auto& r) -> auto& { return r.weather[2]; });
  fn(ColumnInfo{"origin_tmax", ColumnType::f32, true}, [](auto& r) -> auto& { return r.weather[3]; });
  fn(ColumnInfo{"origin_tmin", ColumnType::f32, true}, [](auto& r) -> auto& { return r.weather[4]; });
}

template <class T>
void append_le(std::string& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.append(bytes, sizeof(T));
}

template <class Access>
std::string encode_column(const std::vector<FlightRecord>& records, Access access) {
  using Field = std::remove_cvref_t<decltype(access(records.front()))>;
  std::string out;
  const std::size_t n = records.size();
  if constexpr (std::is_same_v<Field, std::string>) {
    std::uint32_t offset = 0;
    append_le(out, offset);
    for (const auto& r : records) {
      offset += static_cast<std::uint32_t>(access(r).size());
      append_le(out, offset);
    }
    for (const auto& r : records) out += access(r);
  } else {
    using T = typename Field::value_type;
    std::string bitmap((n + 7) / 8, '\0');
    for (std::size_t i = 0; i < n; ++i)
      if (access(records[i])) bitmap[i / 8] = static_cast<char>(bitmap[i / 8] | (1u << (i % 8)));
    out += bitmap;
    for (const auto& r : records) append_le<T>(out, access(r).value_or(T{}));
  }
  return out;
}

class ByteReader {
 public:
  ByteReader(const std::string& data, std::size_t pos = 0) : data_(data), pos_(pos) {}

  template <class T>
  T read() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string read_bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n) const {
    if (pos_ + n > data_.size() || pos_ + n < pos_)
      throw Error(ErrorCode::corrupt, "checkpoint truncated at byte offset " +
                                          std::to_string(data_.size()) + " (needed " +
                                          std::to_string(n) + " bytes at offset " +
                                          std::to_string(pos_) + ")");
  }

  std::size_t pos() const noexcept { return pos_; }

 private:
  const std::string& data_;
  std::size_t pos_;
};

template <class Access>
void decode_column(const std::string& data, std::size_t offset, std::size_t size,
                   std::vector<FlightRecord>& records, Access access) {
  using Field = std::remove_cvref_t<decltype(access(records.front()))>;
  const std::size_t n = records.size();
  ByteReader in(data, offset);
  in.need(size);
  if constexpr (std::is_same_v<Field, std::string>) {
    std::vector<std::uint32_t> offsets(n + 1);
    for (auto& o : offsets) o = in.read<std::uint32_t>();
    const std::size_t base = in.pos();
    for (std::size_t i = 0; i < n; ++i) {
      if (offsets[i + 1] < offsets[i])
        throw Error(ErrorCode::corrupt,
                    "string offsets decrease at byte offset " + std::to_string(offset + 4 * i));
      ByteReader sr(data, base + offsets[i]);
      access(records[i]) = sr.read_bytes(offsets[i + 1] - offsets[i]);
    }
  } else {
    using T = typename Field::value_type;
    const std::string bitmap = in.read_bytes((n + 7) / 8);
    for (std::size_t i = 0; i < n; ++i) {
      const T value = in.read<T>();
      if (bitmap[i / 8] & (1u << (i % 8))) access(records[i]) = value;
      else access(records[i]).reset();
    }
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

Checkpoint write_checkpoint(const std::vector<FlightRecord>& records, int month,
                            const fs::path& path, bool with_weather) {
  if (month < 1 || month > 12)
    throw Error(ErrorCode::invalid_argument, "month out of range: " + std::to_string(month));
  for (const auto& r : records)
    if (r.month && *r.month != month)
      throw Error(ErrorCode::invalid_argument,
                  "record from month " + std::to_string(*r.month) + " in checkpoint for month " +
                      std::to_string(month));

  Checkpoint cp;
  cp.month = month;
  std::vector<std::string> blobs;
  for_each_column(with_weather, [&](ColumnInfo info, auto access) {
    blobs.push_back(encode_column(records, access));
    cp.columns.push_back(std::move(info));
  });

  std::string header;
  header.append(kMagic, 4);
  append_le<std::uint16_t>(header, kCheckpointVersion);
  append_le<std::uint8_t>(header, static_cast<std::uint8_t>(month));
  append_le<std::uint8_t>(header, with_weather ? kFlagWeather : 0);
  append_le<std::uint64_t>(header, records.size());
  append_le<std::uint16_t>(header, static_cast<std::uint16_t>(cp.columns.size()));

  std::size_t dir_size = 0;
  for (const auto& c : cp.columns) dir_size += 1 + c.name.size() + 1 + 1 + 8 + 8;
  std::uint64_t offset = header.size() + dir_size;
  for (std::size_t i = 0; i < cp.columns.size(); ++i) {
    const auto& c = cp.columns[i];
    append_le<std::uint8_t>(header, static_cast<std::uint8_t>(c.name.size()));
    header += c.name;
    append_le<std::uint8_t>(header, static_cast<std::uint8_t>(c.type));
    append_le<std::uint8_t>(header, c.nullable ? 1 : 0);
    append_le<std::uint64_t>(header, offset);
    append_le<std::uint64_t>(header, blobs[i].size());
    offset += blobs[i].size();
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& b : blobs) out.write(b.data(), static_cast<std::streamsize>(b.size()));
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
  cp.records = records;
  return cp;
}

Checkpoint read_checkpoint(const fs::path& path) {
  const std::string data = read_file(path);
  ByteReader in(data);
  if (data.size() < 4 || std::memcmp(data.data(), kMagic, 4) != 0)
    throw Error(ErrorCode::format, path.string() + ": not a checkpoint (bad magic tag)");
  in.read_bytes(4);
  Checkpoint cp;
  cp.format_version = in.read<std::uint16_t>();
  if (cp.format_version != kCheckpointVersion)
    throw Error(ErrorCode::format, path.string() + ": unsupported checkpoint version " +
                                       std::to_string(cp.format_version));
  cp.month = in.read<std::uint8_t>();
  const bool with_weather = in.read<std::uint8_t>() & kFlagWeather;
  const auto count = in.read<std::uint64_t>();
  const auto ncols = in.read<std::uint16_t>();

  struct Entry {
    ColumnInfo info;
    std::uint64_t offset, size;
  };
  std::vector<Entry> dir;
  for (std::uint16_t i = 0; i < ncols; ++i) {
    const auto len = in.read<std::uint8_t>();
    Entry e{{in.read_bytes(len), ColumnType{}, false}, 0, 0};
    e.info.type = static_cast<ColumnType>(in.read<std::uint8_t>());
    e.info.nullable = in.read<std::uint8_t>() != 0;
    e.offset = in.read<std::uint64_t>();
    e.size = in.read<std::uint64_t>();
    dir.push_back(std::move(e));
  }

  std::vector<ColumnInfo> expected;
  for_each_column(with_weather, [&](ColumnInfo info, auto) { expected.push_back(std::move(info)); });
  if (dir.size() != expected.size())
    throw Error(ErrorCode::format, path.string() + ": unexpected column count " +
                                       std::to_string(dir.size()));
  for (std::size_t i = 0; i < dir.size(); ++i)
    if (!(dir[i].info == expected[i]))
      throw Error(ErrorCode::format,
                  path.string() + ": unexpected column '" + dir[i].info.name + "'");
  if (count > data.size())  // every record costs at least one byte
    throw Error(ErrorCode::corrupt, path.string() + ": record count exceeds file size at byte offset 8");

  cp.records.resize(count);
  std::size_t i = 0;
  for_each_column(with_weather, [&](ColumnInfo info, auto access) {
    decode_column(data, dir[i].offset, dir[i].size, cp.records, access);
    cp.columns.push_back(std::move(info));
    ++i;
  });
  return cp;
}

fs::path checkpoint_name(int month) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "month_%02d.fsck", month);
  return buf;
}

std::vector<fs::path> list_checkpoints(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::io, "not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (int m = 1; m <= 12; ++m) {
    auto p = dir / checkpoint_name(m);
    if (fs::exists(p)) out.push_back(std::move(p));
  }
  return out;
}

std::vector<FlightRecord> load_checkpoints(const fs::path& dir, bool* all_have_weather) {
  std::vector<FlightRecord> all;
  bool weather = true;
  const auto paths = list_checkpoints(dir);
  if (paths.empty()) throw Error(ErrorCode::io, "no checkpoints in " + dir.string());
  for (const auto& p : paths) {
    auto cp = read_checkpoint(p);
    weather = weather && cp.has_weather();
    all.insert(all.end(), std::make_move_iterator(cp.records.begin()),
               std::make_move_iterator(cp.records.end()));
  }
  if (all_have_weather) *all_have_weather = weather;
  return all;
}

namespace {

bool is_flight_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  csv::Reader reader(in);
  std::vector<std::string> header;
  try {
    if (!reader.next(header)) return false;
  } catch (const Error&) {
    return false;
  }
  const auto idx = csv::locate_columns(header, retained_columns());
  return std::any_of(idx.begin(), idx.end(), [](const auto& i) { return i.has_value(); });
}

void add_stats(CleanStats& into, const CleanStats& s) {
  into.input += s.input;
  into.missing_target += s.missing_target;
  into.missing_tail += s.missing_tail;
  into.missing_dep_time += s.missing_dep_time;
  into.cancelled += s.cancelled;
  into.invalid_calendar += s.invalid_calendar;
  into.kept += s.kept;
}

}  // namespace

IngestSummary ingest_directory(const fs::path& in_dir, const fs::path& out_dir,
                               const IngestOptions& options) {
  if (!fs::is_directory(in_dir)) throw Error(ErrorCode::io, "not a directory: " + in_dir.string());
  if (options.first_month < 1 || options.last_month > 12 || options.first_month > options.last_month)
    throw Error(ErrorCode::invalid_argument, "month range must lie within 1..12");
  fs::create_directories(out_dir);

  IngestSummary summary;
  std::vector<fs::path> inputs;
  for (const auto& entry : fs::directory_iterator(in_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".csv") inputs.push_back(entry.path());
  std::sort(inputs.begin(), inputs.end());

  std::vector<fs::path> flight_files;
  for (const auto& p : inputs) {
    if (is_flight_file(p)) flight_files.push_back(p);
    else summary.skipped_files.push_back(p.filename().string());
  }

  std::mutex mu;
  std::map<int, std::string> month_owner;

  // Each call holds at most one file's records; they are released on return.
  auto process = [&](const fs::path& path) {
    std::vector<IngestFileReport> reports;
    ParseStats parse;
    std::vector<FlightRecord> records;
    {
      std::ifstream in(path, std::ios::binary);
      if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
      try {
        records = parse_month(in, &parse);
      } catch (const Error& e) {
        throw Error(e.code(), path.filename().string() + ": " + e.what());
      }
    }
    std::map<int, std::vector<FlightRecord>> by_month;
    std::vector<FlightRecord> undated;
    for (auto& r : records) {
      if (r.month) by_month[*r.month].push_back(std::move(r));
      else undated.push_back(std::move(r));
    }
    records.clear();
    records.shrink_to_fit();
    if (!undated.empty()) {
      // Rows without a month cannot be placed; count them as calendar drops.
      const int target = by_month.empty() ? 0 : by_month.begin()->first;
      if (target) for (auto& r : undated) by_month[target].push_back(std::move(r));
    }

    for (auto& [month, rows] : by_month) {
      if (month < options.first_month || month > options.last_month) continue;
      {
        std::lock_guard lock(mu);
        auto [it, inserted] = month_owner.emplace(month, path.filename().string());
        if (!inserted)
          throw Error(ErrorCode::invalid_argument,
                      "month " + std::to_string(month) + " appears in both " + it->second +
                          " and " + path.filename().string());
      }
      IngestFileReport report;
      report.file = path.filename().string();
      report.month = month;
      report.parse = parse;
      auto kept = clean(std::move(rows), &report.clean, options.year);
      write_checkpoint(kept, month, out_dir / checkpoint_name(month));
      reports.push_back(std::move(report));
    }
    return reports;
  };

  auto collect = [&](std::vector<IngestFileReport> reports) {
    for (auto& r : reports) {
      add_stats(summary.totals, r.clean);
      summary.files.push_back(std::move(r));
    }
  };

  const unsigned workers = std::max(1u, options.workers);
  if (workers == 1) {
    for (const auto& p : flight_files) collect(process(p));
  } else {
    for (std::size_t start = 0; start < flight_files.size(); start += workers) {
      std::vector<std::future<std::vector<IngestFileReport>>> batch;
      for (std::size_t i = start; i < std::min(flight_files.size(), start + workers); ++i)
        batch.push_back(std::async(std::launch::async, process, flight_files[i]));
      for (auto& f : batch) collect(f.get());
    }
  }
  std::sort(summary.files.begin(), summary.files.end(),
            [](const auto& a, const auto& b) { return a.month < b.month; });
  return summary;
}

}  // namespace flightsense
