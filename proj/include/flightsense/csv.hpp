#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace flightsense::csv {

// Streaming RFC-4180 reader: quoted fields, doubled quotes, CRLF, and
// newlines inside quotes. One row is materialized at a time.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  // Returns false at end of input. Throws Error(parse) on an unterminated quote.
  bool next(std::vector<std::string>& fields);

  // 1-based line on which the most recently returned row started.
  std::size_t line() const noexcept { return row_line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 1;
  std::size_t row_line_ = 0;
};

// Index of each wanted name in a header row; nullopt where absent.
std::vector<std::optional<std::size_t>> locate_columns(const std::vector<std::string>& header,
                                                       const std::vector<std::string_view>& wanted);

void write_field(std::ostream& out, std::string_view field);

// Shortest representation that parses back to the identical double.
std::string format_double(double value);

std::optional<double> parse_double(std::string_view text);

}  // namespace flightsense::csv
