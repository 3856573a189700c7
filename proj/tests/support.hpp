#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "flightsense/ingest.hpp"

namespace fstest {

namespace fs = std::filesystem;

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("flightsense_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// A cleaned-looking 2018 record.
inline flightsense::FlightRecord leg(std::string tail, int month, int day, int dep, int arr,
                                     std::optional<float> arr_delay, std::string origin = "JFK",
                                     std::string dest = "LAX", std::string airline = "AA") {
  flightsense::FlightRecord r;
  r.year = 2018;
  r.quarter = static_cast<std::int8_t>((month - 1) / 3 + 1);
  r.month = static_cast<std::int8_t>(month);
  r.day_of_month = static_cast<std::int8_t>(day);
  r.day_of_week = 1;
  r.airline = std::move(airline);
  r.origin = std::move(origin);
  r.dest = std::move(dest);
  r.air_time = 300;
  r.distance = 2475;
  r.tail_number = std::move(tail);
  r.arr_delay = arr_delay;
  r.arr_del15 = static_cast<std::int8_t>(arr_delay && *arr_delay >= 15);
  r.dep_delay = arr_delay;
  r.crs_dep_time = static_cast<std::int16_t>(dep);
  r.crs_arr_time = static_cast<std::int16_t>(arr);
  r.dep_time = static_cast<std::int16_t>(dep);
  r.cancelled = 0;
  return r;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace fstest
