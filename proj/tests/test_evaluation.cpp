#include <cmath>

#include "doctest.h"
#include "flightsense/error.hpp"
#include "flightsense/evaluation.hpp"
#include "flightsense/rng.hpp"
#include "flightsense/trainer.hpp"
#include "oracles.hpp"

using namespace flightsense;

namespace {

class CountingScorer : public Scorer {
 public:
  explicit CountingScorer(std::vector<std::string> m) : manifest_(std::move(m)) {}
  const std::vector<std::string>& manifest() const override { return manifest_; }
  double score_row(std::span<const double> row, std::size_t) const override { return row[0] / 2500; }
  std::vector<double> score_rows(const NumericMatrix& m, std::size_t first, std::size_t count) const override {
    ++calls;
    largest = std::max(largest, count);
    return Scorer::score_rows(m, first, count);
  }
  mutable std::size_t calls = 0, largest = 0;

 private:
  std::vector<std::string> manifest_;
};

}  // namespace

TEST_CASE("auc small cases") {
  CHECK(roc_auc(std::vector<double>{0.1, 0.9}, std::vector<double>{0, 1}) == 1.0);
  CHECK(roc_auc(std::vector<double>{0.9, 0.1}, std::vector<double>{0, 1}) == 0.0);
  CHECK(roc_auc(std::vector<double>{0.5, 0.5, 0.5}, std::vector<double>{0, 1, 1}) == 0.5);
  CHECK(roc_auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<double>{0, 0, 1, 1}) == 0.75);
  try {
    roc_auc(std::vector<double>{0.1, 0.2}, std::vector<double>{1, 1});
    FAIL("expected undefined metric");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::undefined_metric);
  }
}

TEST_CASE("auc agrees with the pairwise oracle on tied data") {
  Xorshift64Star rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(300);
    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(12)) / 11.0;
      y[i] = rng.bernoulli(0.3);
    }
    y[0] = 1;
    y[1] = 0;
    CHECK(std::abs(roc_auc(s, y) - oracle::pairwise_auc(s, y)) <= 1e-9);
  }
}

TEST_CASE("threshold metrics") {
  std::vector<double> s = {0.9, 0.5, 0.49, 0.2, 0.7, 0.1};
  std::vector<double> y = {1, 1, 1, 0, 0, 0};
  auto m = threshold_metrics(s, y, 0.5);
  CHECK(m.tp == 2);
  CHECK(m.fn == 1);
  CHECK(m.fp == 1);
  CHECK(m.tn == 2);
  CHECK(m.accuracy == doctest::Approx(4.0 / 6));
  CHECK(m.precision == doctest::Approx(2.0 / 3));
  CHECK(m.recall == doctest::Approx(2.0 / 3));
  CHECK(m.f1 == doctest::Approx(2.0 / 3));
  auto none = threshold_metrics(std::vector<double>{0.1}, std::vector<double>{0}, 0.5);
  CHECK(none.precision == 0);
  CHECK(none.f1 == 0);
}

TEST_CASE("batch scoring walks the matrix in fixed batches") {
  NumericMatrix m;
  m.feature_names = {"x"};
  for (int i = 0; i < 2500; ++i) {
    m.values.push_back(i);
    m.targets.push_back(i % 2);
  }
  CountingScorer scorer({"x"});
  std::size_t batches = 0;
  auto out = batch_score(scorer, m, kDefaultBatchSize, &batches);
  CHECK(batches == 3);
  CHECK(scorer.calls == 3);
  CHECK(scorer.largest == 1000);
  REQUIRE(out.size() == 2500);
  CHECK(out[2499] == 2499.0 / 2500);

  CountingScorer wrong({"y"});
  CHECK_THROWS_AS(batch_score(wrong, m), Error);
}

TEST_CASE("report json") {
  EvalReport a{1, 11, 0.7, 0.8, 0.3, 0.5, 0.4, std::nullopt, 100};
  EvalReport b{2, 22, 0.8, 0.8, 0.3, 0.5, 0.4, 0.1, 100};
  std::vector<EvalReport> reports = {a, b};
  const auto j = reports_to_json(reports);
  CHECK(j.find("\"version\"") != std::string::npos);
  CHECK(j.find("delta_auc_vs_prev") != std::string::npos);
}
