#include "flightsense/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "flightsense/error.hpp"
#include "flightsense/features.hpp"

namespace flightsense {

using json = nlohmann::json;

double roc_auc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size())
    throw Error(ErrorCode::shape, "scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positives = 0, rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1.0) {
        positives += 1;
        rank_sum += midrank;
      }
    i = j;
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0 || negatives == 0)
    throw Error(ErrorCode::undefined_metric, "AUC needs both classes in the labels");
  return (rank_sum - positives * (positives + 1) / 2.0) / (positives * negatives);
}

ThresholdMetrics threshold_metrics(std::span<const double> scores, std::span<const double> labels,
                                   double threshold) {
  if (scores.size() != labels.size())
    throw Error(ErrorCode::shape, "scores and labels differ in length");
  ThresholdMetrics m;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    const bool pos = labels[i] == 1.0;
    if (pred && pos) ++m.tp;
    else if (pred) ++m.fp;
    else if (pos) ++m.fn;
    else ++m.tn;
  }
  auto ratio = [](double a, double b) { return b > 0 ? a / b : 0.0; };
  const double tp = static_cast<double>(m.tp), fp = static_cast<double>(m.fp);
  const double fn = static_cast<double>(m.fn), tn = static_cast<double>(m.tn);
  m.accuracy = ratio(tp + tn, tp + tn + fp + fn);
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.f1 = ratio(2 * m.precision * m.recall, m.precision + m.recall);
  return m;
}

std::vector<double> batch_score(const Scorer& scorer, const NumericMatrix& matrix,
                                std::size_t batch_size, std::size_t* batches) {
  if (batch_size == 0) throw Error(ErrorCode::invalid_argument, "batch size must be positive");
  check_manifest(matrix, scorer);
  std::vector<double> out;
  out.reserve(matrix.rows());
  std::size_t calls = 0;
  for (std::size_t first = 0; first < matrix.rows(); first += batch_size) {
    const std::size_t count = std::min(batch_size, matrix.rows() - first);
    auto part = scorer.score_rows(matrix, first, count);
    if (part.size() != count) throw Error(ErrorCode::shape, "scorer returned the wrong number of scores");
    for (double p : part)
      if (!(p >= 0 && p <= 1)) throw Error(ErrorCode::internal, "scorer returned a probability outside [0,1]");
    out.insert(out.end(), part.begin(), part.end());
    ++calls;
  }
  if (batches) *batches = calls;
  return out;
}

EvalReport evaluate_scorer(const Scorer& scorer, const NumericMatrix& test, int version) {
  const auto scores = batch_score(scorer, test);
  const auto t = threshold_metrics(scores, test.targets);
  EvalReport r;
  r.version = version;
  r.feature_count = test.cols();
  r.auc = roc_auc(scores, test.targets);
  r.accuracy = t.accuracy;
  r.precision = t.precision;
  r.recall = t.recall;
  r.f1 = t.f1;
  r.test_rows = test.rows();
  return r;
}

std::string reports_to_json(std::span<const EvalReport> reports) {
  json arr = json::array();
  for (const auto& r : reports) {
    json j;
    j["version"] = r.version;
    j["feature_count"] = r.feature_count;
    j["auc"] = r.auc;
    j["accuracy"] = r.accuracy;
    j["recall"] = r.recall;
    j["precision"] = r.precision;
    j["f1"] = r.f1;
    if (r.delta_auc_vs_prev) j["delta_auc_vs_prev"] = *r.delta_auc_vs_prev;
    j["test_rows"] = r.test_rows;
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

std::vector<EvalReport> ablate(std::vector<FlightRecord> corpus,
                               std::span<const WeatherObservation> weather,
                               const AblationOptions& options) {
  // Observed values only; gaps stay null and are filled from training medians after the split.
  join_weather(corpus, ObservationIndex(weather), options.stations, nullptr);

  std::vector<EvalReport> reports;
  for (int version = 1; version <= 3; ++version) {
    const auto built = build_features(version, corpus);
    const auto encoding = EncodingMap::fit(built.matrix);
    auto parts = shuffle_split(apply_encoding(built.matrix, encoding), SplitSpec{options.seed});
    std::vector<std::string> always;
    if (version == 3) always = weather_feature_names();
    impute_from_training(parts, always);

    TrainConfig cfg = options.train;
    if (options.auto_pos_weight) cfg.pos_weight = scale_pos_weight(parts.train.targets);
    auto model = fit(parts.train, cfg);
    model.feature_version = version;

    auto report = evaluate_scorer(model, parts.test, version);
    if (!reports.empty()) report.delta_auc_vs_prev = report.auc - reports.back().auc;
    reports.push_back(report);
  }
  return reports;
}

}  // namespace flightsense
