#pragma once

#include <stdexcept>
#include <string>

namespace flightsense {

// Every failure the core raises carries one of these codes; the C API maps
// them 1:1 onto fs_status.
enum class ErrorCode {
  invalid_argument = 1,
  schema = 2,
  parse = 3,
  format = 4,
  corrupt = 5,
  domain = 6,
  contract = 7,
  config = 8,
  shape = 9,
  divergence = 10,
  undefined_metric = 11,
  io = 12,
  validation = 13,
  not_found = 14,
  internal = 99,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string field = {})
      : std::runtime_error(message), code_(code), field_(std::move(field)) {}

  ErrorCode code() const noexcept { return code_; }
  // Name of the offending input field, when there is one (validation errors).
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorCode code_;
  std::string field_;
};

}  // namespace flightsense
