#include "flightsense/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "flightsense/csv.hpp"
#include "flightsense/error.hpp"
#include "flightsense/rng.hpp"
#include "flightsense/weather.hpp"

namespace flightsense {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << text << '\n';
}

}  // namespace

// --- encoding --------------------------------------------------------------------

void EncodingMap::add_column(const std::string& column, std::vector<std::string> values) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  auto& codes = codes_[column];
  codes.clear();
  for (std::size_t i = 0; i < values.size(); ++i) codes[values[i]] = static_cast<int>(i);
  categories_[column] = std::move(values);
}

EncodingMap EncodingMap::fit(const FeatureMatrix& matrix) {
  EncodingMap map;
  for (const auto& c : matrix.columns)
    if (c.categorical) map.add_column(c.name, c.labels);
  return map;
}

EncodingMap EncodingMap::fit(std::span<const FlightRecord> records) {
  std::vector<std::string> airlines, origins, dests;
  for (const auto& r : records) {
    airlines.push_back(r.airline);
    origins.push_back(r.origin);
    dests.push_back(r.dest);
  }
  EncodingMap map;
  map.add_column("Reporting_Airline", std::move(airlines));
  map.add_column("Origin", std::move(origins));
  map.add_column("Dest", std::move(dests));
  return map;
}

int EncodingMap::encode(std::string_view column, std::string_view value) const {
  auto col = codes_.find(column);
  if (col == codes_.end()) return kUnknown;
  auto it = col->second.find(value);
  return it == col->second.end() ? kUnknown : it->second;
}

const std::string& EncodingMap::decode(std::string_view column, int code) const {
  auto col = categories_.find(column);
  if (col == categories_.end())
    throw Error(ErrorCode::not_found, "no encoding for column '" + std::string(column) + "'");
  if (code < 0 || static_cast<std::size_t>(code) >= col->second.size())
    throw Error(ErrorCode::not_found, "unknown code " + std::to_string(code) + " for column '" +
                                          std::string(column) + "'");
  return col->second[static_cast<std::size_t>(code)];
}

std::string EncodingMap::to_json() const {
  json j = json::object();
  for (const auto& [column, codes] : codes_) {
    json c = json::object();
    for (const auto& [value, code] : codes) c[value] = code;
    j[column] = std::move(c);
  }
  return j.dump(2);
}

EncodingMap EncodingMap::from_json(const std::string& text) {
  EncodingMap map;
  try {
    const json doc = json::parse(text);
    if (!doc.is_object()) throw Error(ErrorCode::format, "category mappings must be a JSON object");
    for (const auto& [column, codes] : doc.items()) {
      std::vector<std::pair<int, std::string>> by_code;
      for (const auto& [value, code] : codes.items()) by_code.emplace_back(code.get<int>(), value);
      std::sort(by_code.begin(), by_code.end());
      std::vector<std::string> values;
      for (std::size_t i = 0; i < by_code.size(); ++i) {
        if (by_code[i].first != static_cast<int>(i))
          throw Error(ErrorCode::format, "codes for '" + column + "' are not 0..K-1");
        values.push_back(by_code[i].second);
      }
      auto& cmap = map.codes_[column];
      for (std::size_t i = 0; i < values.size(); ++i) cmap[values[i]] = static_cast<int>(i);
      map.categories_[column] = std::move(values);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format, std::string("invalid category mappings: ") + e.what());
  }
  return map;
}

void EncodingMap::save(const fs::path& path) const { spit(path, to_json()); }
EncodingMap EncodingMap::load(const fs::path& path) { return from_json(slurp(path)); }

// --- numeric matrix --------------------------------------------------------------

NumericMatrix NumericMatrix::take(std::span<const std::size_t> indices) const {
  NumericMatrix out;
  out.feature_names = feature_names;
  out.targets.reserve(indices.size());
  out.values.reserve(indices.size() * cols());
  for (std::size_t i : indices) {
    out.targets.push_back(targets[i]);
    const auto r = row(i);
    out.values.insert(out.values.end(), r.begin(), r.end());
  }
  return out;
}

std::size_t NumericMatrix::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < feature_names.size(); ++i)
    if (feature_names[i] == name) return i;
  throw Error(ErrorCode::shape, "no column '" + std::string(name) + "'");
}

NumericMatrix apply_encoding(const FeatureMatrix& matrix, const EncodingMap& map) {
  NumericMatrix out;
  const std::size_t n = matrix.rows();
  const std::size_t k = matrix.columns.size();
  for (const auto& c : matrix.columns) out.feature_names.push_back(c.name);
  out.targets = matrix.target;
  out.values.resize(n * k);
  for (std::size_t c = 0; c < k; ++c) {
    const auto& col = matrix.columns[c];
    for (std::size_t i = 0; i < n; ++i)
      out.values[i * k + c] =
          col.categorical ? static_cast<double>(map.encode(col.name, col.labels[i])) : col.numeric[i];
  }
  return out;
}

// --- split -----------------------------------------------------------------------

SplitSizes SplitSpec::sizes(std::size_t n) {
  if (n < 10)
    throw Error(ErrorCode::invalid_argument,
                "need at least 10 rows to split 80/10/10, got " + std::to_string(n));
  SplitSizes s;
  s.train = n * 8 / 10;
  s.val = n / 10;
  s.test = n - s.train - s.val;
  return s;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Xorshift64Star rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

SplitIndices split_indices(std::size_t n, const SplitSpec& spec) {
  const auto sizes = SplitSpec::sizes(n);
  const auto perm = shuffled_indices(n, spec.seed);
  SplitIndices out;
  const auto* p = perm.data();
  out.train.assign(p, p + sizes.train);
  out.val.assign(p + sizes.train, p + sizes.train + sizes.val);
  out.test.assign(p + sizes.train + sizes.val, p + n);
  return out;
}

Partitions shuffle_split(const NumericMatrix& matrix, const SplitSpec& spec) {
  const auto idx = split_indices(matrix.rows(), spec);
  return Partitions{matrix.take(idx.train), matrix.take(idx.val), matrix.take(idx.test)};
}

std::map<std::string, double> impute_from_training(Partitions& parts,
                                                   const std::vector<std::string>& always_include) {
  std::map<std::string, double> medians;
  const std::size_t k = parts.train.cols();
  for (std::size_t c = 0; c < k; ++c) {
    const auto& name = parts.train.feature_names[c];
    bool needed = std::find(always_include.begin(), always_include.end(), name) != always_include.end();
    for (const auto* m : {&parts.train, &parts.val, &parts.test})
      for (std::size_t i = 0; i < m->rows() && !needed; ++i)
        needed = std::isnan(m->values[i * k + c]);
    if (!needed) continue;

    std::vector<double> column;
    column.reserve(parts.train.rows());
    for (std::size_t i = 0; i < parts.train.rows(); ++i) column.push_back(parts.train.values[i * k + c]);
    const double median = lower_median(std::move(column)).value_or(0.0);
    medians[name] = median;
    for (auto* m : {&parts.train, &parts.val, &parts.test})
      for (std::size_t i = 0; i < m->rows(); ++i)
        if (std::isnan(m->values[i * k + c])) m->values[i * k + c] = median;
  }
  return medians;
}

double scale_pos_weight(std::span<const double> targets) {
  std::size_t pos = 0;
  for (double t : targets) pos += t == 1.0;
  if (pos == 0) throw Error(ErrorCode::invalid_argument, "scale_pos_weight: no positive targets");
  const std::size_t neg = targets.size() - pos;
  return static_cast<double>(neg) / static_cast<double>(pos);
}

// --- export ----------------------------------------------------------------------

void export_partition(const NumericMatrix& m, const fs::path& path) {
  const std::size_t k = m.cols();
  std::string buffer;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    if (!std::isfinite(m.targets[i]))
      throw Error(ErrorCode::invalid_argument, "non-finite target at row " + std::to_string(i));
    buffer += csv::format_double(m.targets[i]);
    for (std::size_t c = 0; c < k; ++c) {
      const double v = m.values[i * k + c];
      if (!std::isfinite(v))
        throw Error(ErrorCode::invalid_argument, "non-finite value at row " + std::to_string(i) +
                                                     ", column " + m.feature_names[c]);
      buffer += ',';
      buffer += csv::format_double(v);
    }
    buffer += '\n';
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << buffer;
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

NumericMatrix import_partition(const fs::path& path, const std::vector<std::string>& feature_names) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  csv::Reader reader(in);
  NumericMatrix m;
  m.feature_names = feature_names;
  std::vector<std::string> row;
  while (reader.next(row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != feature_names.size() + 1)
      throw Error(ErrorCode::shape, path.string() + ": line " + std::to_string(reader.line()) +
                                        " has " + std::to_string(row.size()) + " values, expected " +
                                        std::to_string(feature_names.size() + 1));
    for (std::size_t c = 0; c < row.size(); ++c) {
      auto v = csv::parse_double(row[c]);
      if (!v)
        throw Error(ErrorCode::parse, path.string() + ": line " + std::to_string(reader.line()) +
                                          ": not a number in field " + std::to_string(c + 1));
      if (c == 0) m.targets.push_back(*v);
      else m.values.push_back(*v);
    }
  }
  return m;
}

// --- manifest & driver -----------------------------------------------------------

std::string DatasetManifest::to_json() const {
  json j;
  j["version"] = version;
  j["target"] = std::string(kTargetName);
  j["features"] = features;
  j["seed"] = seed;
  j["sizes"] = {{"train", sizes.train}, {"val", sizes.val}, {"test", sizes.test}};
  j["scale_pos_weight"] = scale_pos_weight;
  return j.dump(2);
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    DatasetManifest m;
    m.version = j.at("version").get<int>();
    m.features = j.at("features").get<std::vector<std::string>>();
    m.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("sizes")) {
      m.sizes.train = j["sizes"].value("train", std::size_t{0});
      m.sizes.val = j["sizes"].value("val", std::size_t{0});
      m.sizes.test = j["sizes"].value("test", std::size_t{0});
    }
    m.scale_pos_weight = j.value("scale_pos_weight", 1.0);
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format, std::string("invalid dataset manifest: ") + e.what());
  }
}

DatasetManifest DatasetManifest::load(const fs::path& path) { return from_json(slurp(path)); }

SplitSummary split_to_directory(const FeatureMatrix& matrix, std::uint64_t seed,
                                const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const auto encoding = EncodingMap::fit(matrix);
  const auto numeric = apply_encoding(matrix, encoding);
  auto parts = shuffle_split(numeric, SplitSpec{seed});

  std::vector<std::string> always;
  if (matrix.version == 3) always = weather_feature_names();
  SplitSummary summary;
  summary.medians = impute_from_training(parts, always);

  export_partition(parts.train, out_dir / "train.csv");
  export_partition(parts.val, out_dir / "val.csv");
  export_partition(parts.test, out_dir / "test.csv");
  encoding.save(out_dir / "category_mappings.json");

  auto& man = summary.manifest;
  man.version = matrix.version;
  man.features = numeric.feature_names;
  man.seed = seed;
  man.sizes = SplitSizes{parts.train.rows(), parts.val.rows(), parts.test.rows()};
  man.scale_pos_weight = scale_pos_weight(parts.train.targets);
  spit(out_dir / "manifest.json", man.to_json());
  spit(out_dir / "imputation_medians.json", json(summary.medians).dump(2));
  return summary;
}

}  // namespace flightsense
