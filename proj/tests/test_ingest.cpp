#include <sstream>

#include "doctest.h"
#include "flightsense/csv.hpp"
#include "flightsense/error.hpp"
#include "flightsense/ingest.hpp"
#include "flightsense/rng.hpp"
#include "flightsense/synthgen.hpp"
#include "support.hpp"

using namespace flightsense;
using fstest::TempDir;

namespace {

// One CSV row in header order; cells named in `cells` override the defaults.
std::string row_for(const std::vector<std::string>& header, const std::map<std::string, std::string>& cells) {
  static const std::map<std::string, std::string> defaults = {
      {"Year", "2018"},       {"Quarter", "1"},       {"Month", "1"},        {"DayofMonth", "4"},
      {"DayOfWeek", "4"},     {"Reporting_Airline", "AA"}, {"Origin", "JFK"}, {"Dest", "LAX"},
      {"AirTime", "320"},     {"Distance", "2475"},   {"Tail_Number", "N101AA"}, {"ArrDel15", "1"},
      {"ArrDelay", "42"},     {"DepDelay", "35"},     {"CRSDepTime", "0800"}, {"CRSArrTime", "1130"},
      {"DepTime", "0835"},    {"Cancelled", "0"}};
  std::string line;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) line += ',';
    auto it = cells.find(header[i]);
    if (it != cells.end()) line += it->second;
    else if (auto d = defaults.find(header[i]); d != defaults.end()) line += d->second;
    else line += "x";
  }
  return line + "\n";
}

std::vector<std::string> retained_header() {
  std::vector<std::string> h;
  for (auto c : retained_columns()) h.emplace_back(c);
  return h;
}

std::string join_header(const std::vector<std::string>& h) {
  std::string s;
  for (std::size_t i = 0; i < h.size(); ++i) s += (i ? "," : "") + h[i];
  return s + "\n";
}

std::vector<FlightRecord> parse(const std::string& text, ParseStats* stats = nullptr) {
  std::istringstream in(text);
  return parse_month(in, stats);
}

std::vector<FlightRecord> random_records(std::size_t n, int month) {
  Xorshift64Star rng(99, static_cast<std::uint64_t>(month));
  std::vector<FlightRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto r = fstest::leg("N" + std::to_string(rng.range(100, 999)), month, int(rng.range(1, 28)),
                         int(rng.range(0, 23) * 100 + rng.range(0, 59)), int(rng.range(0, 2359) / 100 * 100),
                         float(rng.range(-30, 200)) + 0.5f);
    if (rng.bernoulli(0.1)) r.arr_delay.reset();
    if (rng.bernoulli(0.1)) r.air_time.reset();
    if (rng.bernoulli(0.1)) r.dep_time.reset();
    if (rng.bernoulli(0.1)) r.cancelled.reset();
    if (rng.bernoulli(0.2)) r.weather = {1.5f, std::nullopt, 0.0f, -3.25f, -20.0f};
    out.push_back(r);
  }
  return out;
}

}  // namespace

TEST_CASE("parse_month keeps the retained columns and skips the rest") {
  auto header = retained_header();
  for (int i = 0; header.size() < 110; ++i) header.push_back("Extra" + std::to_string(i));
  std::string text = join_header(header) + row_for(header, {}) + row_for(header, {{"Origin", "ORD"}});
  ParseStats stats;
  auto recs = parse(text, &stats);
  REQUIRE(recs.size() == 2);
  CHECK(stats.skipped_columns == 93);
  CHECK(recs[0].origin == "JFK");
  CHECK(recs[1].origin == "ORD");
  CHECK(recs[0].arr_delay == 42.0f);
  CHECK(recs[0].crs_dep_time == 800);
  CHECK_FALSE(recs[0].cancelled.has_value());
}

TEST_CASE("parse_month edge cases") {
  const auto header = retained_header();

  SUBCASE("header only") { CHECK(parse(join_header(header)).empty()); }

  SUBCASE("empty target becomes null") {
    auto recs = parse(join_header(header) + row_for(header, {{"ArrDel15", ""}}));
    REQUIRE(recs.size() == 1);
    CHECK_FALSE(recs[0].arr_del15.has_value());
  }

  SUBCASE("garbage numerics become null") {
    auto recs = parse(join_header(header) + row_for(header, {{"ArrDelay", "abc"}, {"Distance", "?"}}));
    CHECK_FALSE(recs[0].arr_delay.has_value());
    CHECK_FALSE(recs[0].distance.has_value());
  }

  SUBCASE("2400 normalizes to 2359") {
    auto recs = parse(join_header(header) + row_for(header, {{"CRSDepTime", "2400"}}));
    CHECK(recs[0].crs_dep_time == 2359);
  }

  SUBCASE("quoted fields with commas") {
    auto h = header;
    h.push_back("OriginCityName");
    auto recs = parse(join_header(h) + row_for(h, {{"OriginCityName", "\"New York, NY\""}}));
    CHECK(recs.size() == 1);
  }

  SUBCASE("cancelled column is read when present") {
    auto h = header;
    h.emplace_back(kCancelledColumn);
    auto recs = parse(join_header(h) + row_for(h, {{"Cancelled", "1.00"}}));
    CHECK(recs[0].cancelled == 1);
  }
}

TEST_CASE("parse_month errors") {
  auto header = retained_header();
  header.erase(header.begin() + 10);  // Tail_Number
  try {
    parse(join_header(header));
    FAIL("expected a schema error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::schema);
    CHECK(std::string(e.what()).find("Tail_Number") != std::string::npos);
  }

  const auto full = retained_header();
  std::string text = join_header(full) + row_for(full, {}) + row_for(full, {{"Origin", "\"JFK"}});
  try {
    parse(text);
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::parse);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("clean drops in order and tallies each filter") {
  std::vector<FlightRecord> recs;
  auto ok = fstest::leg("N1", 1, 5, 800, 1000, 3.0f);
  recs.push_back(ok);
  auto no_target = ok;
  no_target.arr_del15.reset();
  no_target.tail_number.clear();  // counted under the first failing filter only
  recs.push_back(no_target);
  auto no_tail = ok;
  no_tail.tail_number.clear();
  recs.push_back(no_tail);
  auto no_dep = ok;
  no_dep.crs_dep_time.reset();
  recs.push_back(no_dep);
  auto cancelled = ok;
  cancelled.cancelled = 1;
  recs.push_back(cancelled);
  auto bad_date = ok;
  bad_date.month = 2;
  bad_date.day_of_month = 30;
  recs.push_back(bad_date);
  auto ok2 = fstest::leg("N2", 1, 5, 900, 1100, 20.0f);
  ok2.cancelled.reset();
  recs.push_back(ok2);

  CleanStats st;
  auto kept = clean(recs, &st);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0] == ok);
  CHECK(kept[1] == ok2);
  CHECK(st.missing_target == 1);
  CHECK(st.missing_tail == 1);
  CHECK(st.missing_dep_time == 1);
  CHECK(st.cancelled == 1);
  CHECK(st.invalid_calendar == 1);
  CHECK(st.input - st.kept == st.dropped());
  CHECK(clean(kept) == kept);
}

TEST_CASE("checkpoint round trip is exact") {
  TempDir dir("ckpt");
  auto recs = random_records(1000, 3);
  auto written = write_checkpoint(recs, 3, dir / "m.fsck", true);
  CHECK(written.records.size() == 1000);
  auto back = read_checkpoint(dir / "m.fsck");
  CHECK(back.month == 3);
  CHECK(back.format_version == kCheckpointVersion);
  CHECK(back.has_weather());
  CHECK(back.records == recs);
  CHECK(fstest::slurp(dir / "m.fsck").substr(0, 4) == "FSCK");

  write_checkpoint(back.records, 3, dir / "again.fsck", true);
  CHECK(fstest::slurp(dir / "m.fsck") == fstest::slurp(dir / "again.fsck"));

  SUBCASE("without weather the weather columns are dropped") {
    write_checkpoint(recs, 3, dir / "nw.fsck", false);
    auto nw = read_checkpoint(dir / "nw.fsck");
    CHECK_FALSE(nw.has_weather());
    CHECK(nw.records.size() == recs.size());
    CHECK_FALSE(nw.records[0].weather[0].has_value());
  }

  SUBCASE("records from another month are rejected") {
    CHECK_THROWS_AS(write_checkpoint(recs, 4, dir / "x.fsck"), Error);
  }
}

TEST_CASE("checkpoint corruption is reported") {
  TempDir dir("ckpt_bad");
  write_checkpoint(random_records(200, 1), 1, dir / "m.fsck");
  const std::string bytes = fstest::slurp(dir / "m.fsck");

  auto code_of = [&](const std::string& content) {
    fstest::spit(dir / "bad.fsck", content);
    try {
      read_checkpoint(dir / "bad.fsck");
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::internal;
  };

  CHECK(code_of("XXXX" + bytes.substr(4)) == ErrorCode::format);
  std::string v2 = bytes;
  v2[4] = 2;
  CHECK(code_of(v2) == ErrorCode::format);

  fstest::spit(dir / "bad.fsck", bytes.substr(0, bytes.size() / 2));
  try {
    read_checkpoint(dir / "bad.fsck");
    FAIL("expected corruption");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::corrupt);
    CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
  }
}

TEST_CASE("per-file ingest equals processing the concatenated input") {
  SynthConfig cfg;
  cfg.n_aircraft = 30;
  cfg.days = 45;  // January and part of February
  cfg.dirty_rate = 0.05;
  TempDir raw("raw"), ck("ck");
  auto files = write_corpus(generate(cfg), raw.path());
  REQUIRE(files.flight_files.size() == 2);

  auto summary = ingest_directory(raw.path(), ck.path());
  CHECK(summary.files.size() == 2);
  CHECK(summary.skipped_files.size() == 1);  // weather.csv
  CHECK(summary.totals.dropped() > 0);
  auto per_file = load_checkpoints(ck.path());

  std::string concatenated;
  for (std::size_t i = 0; i < files.flight_files.size(); ++i) {
    std::string text = fstest::slurp(files.flight_files[i]);
    concatenated += i == 0 ? text : text.substr(text.find('\n') + 1);
  }
  auto single = clean(parse(concatenated));
  CHECK(per_file.size() == single.size());
  CHECK(per_file == single);

  SUBCASE("month filter") {
    TempDir only("ck2");
    ingest_directory(raw.path(), only.path(), {2, 2, 2018, 1});
    auto feb = load_checkpoints(only.path());
    CHECK(!feb.empty());
    for (const auto& r : feb) CHECK(r.month == 2);
  }
}
