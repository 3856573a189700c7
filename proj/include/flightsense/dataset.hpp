#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flightsense/features.hpp"

namespace flightsense {

// Per-column categorical codes: 0..K-1 in lexicographic order, -1 for unknown.
class EncodingMap {
 public:
  static constexpr int kUnknown = -1;

  static EncodingMap fit(const FeatureMatrix& matrix);
  static EncodingMap fit(std::span<const FlightRecord> records);

  int encode(std::string_view column, std::string_view value) const;
  // Throws Error(not_found) for an unknown column or code.
  const std::string& decode(std::string_view column, int code) const;

  const std::map<std::string, std::vector<std::string>, std::less<>>& categories() const noexcept {
    return categories_;
  }

  // {"Reporting_Airline": {"AA": 0, ...}, "Origin": {...}, "Dest": {...}}
  std::string to_json() const;
  static EncodingMap from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static EncodingMap load(const std::filesystem::path& path);

 private:
  void add_column(const std::string& column, std::vector<std::string> values);

  std::map<std::string, std::vector<std::string>, std::less<>> categories_;
  std::map<std::string, std::map<std::string, int, std::less<>>, std::less<>> codes_;
};

// Dense row-major numeric matrix with the target kept separately.
struct NumericMatrix {
  std::vector<std::string> feature_names;
  std::vector<double> targets;
  std::vector<double> values;

  std::size_t rows() const noexcept { return targets.size(); }
  std::size_t cols() const noexcept { return feature_names.size(); }
  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * cols(), cols()};
  }
  std::span<double> row(std::size_t i) { return {values.data() + i * cols(), cols()}; }
  // Rows gathered in the given order.
  NumericMatrix take(std::span<const std::size_t> indices) const;
  std::size_t column_index(std::string_view name) const;

  bool operator==(const NumericMatrix&) const = default;
};

NumericMatrix apply_encoding(const FeatureMatrix& matrix, const EncodingMap& map);

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

struct SplitSpec {
  std::uint64_t seed = 42;

  // (floor(0.8n), floor(0.1n), remainder). Throws for n < 10.
  static SplitSizes sizes(std::size_t n);
};

// Seeded Fisher-Yates permutation of 0..n-1 (xorshift64*).
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

SplitIndices split_indices(std::size_t n, const SplitSpec& spec);

struct Partitions {
  NumericMatrix train, val, test;
};

Partitions shuffle_split(const NumericMatrix& matrix, const SplitSpec& spec);

// Lower median of each column over the training partition (NaN cells
// ignored), for every column that has a NaN anywhere or is listed in
// always_include. NaN cells of all partitions are then replaced.
std::map<std::string, double> impute_from_training(Partitions& parts,
                                                   const std::vector<std::string>& always_include);

// negatives / positives. Throws with zero positives.
double scale_pos_weight(std::span<const double> targets);

// Headerless CSV, target first, features in manifest order.
void export_partition(const NumericMatrix& matrix, const std::filesystem::path& path);
NumericMatrix import_partition(const std::filesystem::path& path,
                               const std::vector<std::string>& feature_names);

struct DatasetManifest {
  int version = 0;
  std::vector<std::string> features;
  std::uint64_t seed = 0;
  SplitSizes sizes;
  double scale_pos_weight = 1.0;

  std::string to_json() const;
  static DatasetManifest from_json(const std::string& text);
  static DatasetManifest load(const std::filesystem::path& path);
};

struct SplitSummary {
  DatasetManifest manifest;
  std::map<std::string, double> medians;
};

// Encode -> split -> impute -> export. Writes train.csv, val.csv, test.csv,
// manifest.json, category_mappings.json and imputation_medians.json.
SplitSummary split_to_directory(const FeatureMatrix& matrix, std::uint64_t seed,
                                const std::filesystem::path& out_dir);

}  // namespace flightsense
