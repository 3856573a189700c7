#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace flightsense {

struct Date {
  int year = 0;
  int month = 0;
  int day = 0;

  auto operator<=>(const Date&) const = default;
};

bool is_leap_year(int year) noexcept;
int days_in_month(int year, int month) noexcept;
bool is_valid_date(int year, int month, int day) noexcept;

// Days since 1970-01-01 (proleptic Gregorian).
long days_from_civil(const Date& d) noexcept;
Date civil_from_days(long days) noexcept;
Date add_days(const Date& d, long n) noexcept;

// BTS convention: 1 = Monday ... 7 = Sunday.
int day_of_week(const Date& d) noexcept;
int quarter_of(int month) noexcept;

// Accepts YYYY-MM-DD, optionally followed by a "T..." time suffix (GHCND CSV exports).
std::optional<Date> parse_iso_date(std::string_view text);
std::string format_iso_date(const Date& d);

}  // namespace flightsense
