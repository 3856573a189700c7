#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flightsense/dataset.hpp"
#include "flightsense/scoring.hpp"
#include "flightsense/trainer.hpp"
#include "flightsense/weather.hpp"

namespace flightsense {

// Rank-sum AUC with midranks for ties. Throws Error(undefined_metric) unless
// both classes are present.
double roc_auc(std::span<const double> scores, std::span<const double> labels);

struct ThresholdMetrics {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

// score >= threshold predicts positive; zero-denominator ratios are 0.
ThresholdMetrics threshold_metrics(std::span<const double> scores, std::span<const double> labels,
                                   double threshold = 0.5);

inline constexpr std::size_t kDefaultBatchSize = 1000;

// Scores every row, batch_size rows per scorer call. batches (optional)
// receives the number of calls made.
std::vector<double> batch_score(const Scorer& scorer, const NumericMatrix& matrix,
                                std::size_t batch_size = kDefaultBatchSize,
                                std::size_t* batches = nullptr);

struct EvalReport {
  int version = 0;
  std::size_t feature_count = 0;
  double auc = 0, accuracy = 0, recall = 0, precision = 0, f1 = 0;
  std::optional<double> delta_auc_vs_prev;
  std::size_t test_rows = 0;
};

EvalReport evaluate_scorer(const Scorer& scorer, const NumericMatrix& test, int version);

std::string reports_to_json(std::span<const EvalReport> reports);

struct AblationOptions {
  std::uint64_t seed = 42;
  TrainConfig train;
  bool auto_pos_weight = true;  // use the training partition's neg/pos ratio
  StationMap stations = StationMap::defaults();
};

// V1, V2 and V3 over the same cleaned corpus and split seed, each evaluated
// on its test partition (the same rows for every version).
std::vector<EvalReport> ablate(std::vector<FlightRecord> corpus,
                               std::span<const WeatherObservation> weather,
                               const AblationOptions& options);

}  // namespace flightsense
