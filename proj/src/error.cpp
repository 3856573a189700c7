#include "flightsense/error.hpp"

namespace flightsense {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::schema: return "schema";
    case ErrorCode::parse: return "parse";
    case ErrorCode::format: return "format";
    case ErrorCode::corrupt: return "corrupt";
    case ErrorCode::domain: return "domain";
    case ErrorCode::contract: return "contract";
    case ErrorCode::config: return "config";
    case ErrorCode::shape: return "shape";
    case ErrorCode::divergence: return "divergence";
    case ErrorCode::undefined_metric: return "undefined_metric";
    case ErrorCode::io: return "io";
    case ErrorCode::validation: return "validation";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::internal: return "internal";
  }
  return "unknown";
}

}  // namespace flightsense
