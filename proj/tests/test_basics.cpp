#include <sstream>

#include "doctest.h"
#include "flightsense/calendar.hpp"
#include "flightsense/csv.hpp"
#include "flightsense/error.hpp"
#include "flightsense/rng.hpp"

using namespace flightsense;

TEST_CASE("calendar") {
  CHECK(day_of_week({2018, 1, 1}) == 1);
  CHECK(day_of_week({2018, 7, 4}) == 3);
  CHECK(day_of_week({2018, 12, 30}) == 7);
  CHECK(is_valid_date(2018, 2, 28));
  CHECK_FALSE(is_valid_date(2018, 2, 29));
  CHECK(is_valid_date(2020, 2, 29));
  CHECK(add_days({2018, 12, 31}, 1) == Date{2019, 1, 1});
  CHECK(civil_from_days(days_from_civil({2018, 3, 15})) == Date{2018, 3, 15});
  CHECK(parse_iso_date("2018-01-04T00:00:00") == Date{2018, 1, 4});
  CHECK_FALSE(parse_iso_date("2018-1-4x").has_value());
  CHECK_FALSE(parse_iso_date("2018-02-30").has_value());
  CHECK(format_iso_date({2018, 1, 4}) == "2018-01-04");
  CHECK(quarter_of(11) == 4);
}

TEST_CASE("csv reader") {
  std::istringstream in("a,\"b,c\",\"d\"\"e\"\r\n\"multi\nline\",2\n");
  csv::Reader r(in);
  std::vector<std::string> row;
  REQUIRE(r.next(row));
  CHECK(row == std::vector<std::string>{"a", "b,c", "d\"e"});
  REQUIRE(r.next(row));
  CHECK(row[0] == "multi\nline");
  CHECK(r.line() == 2);
  CHECK_FALSE(r.next(row));

  std::istringstream bad("x\n\"open,1\n");
  csv::Reader rb(bad);
  REQUIRE(rb.next(row));
  CHECK_THROWS_AS(rb.next(row), Error);
}

TEST_CASE("number formatting round-trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 1e21, 123456789.0, 0.0})
    CHECK(csv::parse_double(csv::format_double(v)) == v);
  CHECK(csv::format_double(2.0) == "2");
  CHECK_FALSE(csv::parse_double("").has_value());
  CHECK_FALSE(csv::parse_double("1.5x").has_value());
}

TEST_CASE("xorshift64* stream") {
  Xorshift64Star a(42), b(42), c(42, 1);
  CHECK(a.next() == b.next());
  CHECK(a.next() != c.next());
  Xorshift64Star d(7);
  for (int i = 0; i < 1000; ++i) {
    const auto v = d.range(3, 9);
    CHECK((v >= 3 && v <= 9));
    const double u = d.uniform();
    CHECK((u >= 0 && u < 1));
  }
}
