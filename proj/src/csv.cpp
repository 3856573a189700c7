#include "flightsense/csv.hpp"

#include <charconv>
#include <cmath>

#include "flightsense/error.hpp"

namespace flightsense::csv {

bool Reader::next(std::vector<std::string>& fields) {
  fields.clear();
  std::streambuf* buf = in_.rdbuf();
  int c = buf->sgetc();
  if (c == std::char_traits<char>::eof()) return false;

  row_line_ = line_;
  std::string field;
  bool in_quotes = false;
  bool field_was_quoted = false;

  for (;;) {
    c = buf->sbumpc();
    if (c == std::char_traits<char>::eof()) {
      if (in_quotes)
        throw Error(ErrorCode::parse,
                    "unterminated quoted field starting on line " + std::to_string(row_line_));
      fields.push_back(std::move(field));
      return true;
    }
    const char ch = static_cast<char>(c);
    if (in_quotes) {
      if (ch == '"') {
        if (buf->sgetc() == '"') {
          buf->sbumpc();
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (ch == '\n') ++line_;
        field.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        if (field.empty() && !field_was_quoted) {
          in_quotes = true;
          field_was_quoted = true;
        } else {
          throw Error(ErrorCode::parse,
                      "stray quote inside unquoted field on line " + std::to_string(line_));
        }
        break;
      case ',':
        fields.push_back(std::move(field));
        field.clear();
        field_was_quoted = false;
        break;
      case '\r':
        if (buf->sgetc() == '\n') buf->sbumpc();
        [[fallthrough]];
      case '\n':
        ++line_;
        fields.push_back(std::move(field));
        return true;
      default:
        if (field_was_quoted)
          throw Error(ErrorCode::parse,
                      "text after closing quote on line " + std::to_string(line_));
        field.push_back(ch);
    }
  }
}

std::vector<std::optional<std::size_t>> locate_columns(const std::vector<std::string>& header,
                                                       const std::vector<std::string_view>& wanted) {
  std::vector<std::optional<std::size_t>> out(wanted.size());
  for (std::size_t i = 0; i < header.size(); ++i) {
    std::string_view name = header[i];
    // Tolerate a UTF-8 BOM on the first header cell.
    if (i == 0 && name.starts_with("\xEF\xBB\xBF")) name.remove_prefix(3);
    for (std::size_t w = 0; w < wanted.size(); ++w)
      if (!out[w] && name == wanted[w]) out[w] = i;
  }
  return out;
}

void write_field(std::ostream& out, std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) {
    out << field;
    return;
  }
  out << '"';
  for (char ch : field) {
    if (ch == '"') out << '"';
    out << ch;
  }
  out << '"';
}

std::string format_double(double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

std::optional<double> parse_double(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t')) text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return std::nullopt;
  double value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value))
    return std::nullopt;
  return value;
}

}  // namespace flightsense::csv
