#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "flightsense/dataset.hpp"
#include "flightsense/scoring.hpp"

namespace flightsense {

struct Objective {
  double l2 = 1e-4;
  double pos_weight = 1.0;  // weight of y = 1 rows
};

struct TrainConfig {
  double learning_rate = 1.0;
  int epochs = 400;
  double l2 = 1e-4;
  double pos_weight = 1.0;
  // Stop once an accepted step improves the loss by less than tolerance * max(1, loss).
  double tolerance = 1e-10;
  unsigned workers = 0;  // 0 = hardware concurrency

  Objective objective() const { return {l2, pos_weight}; }
};

// Logistic regression over standardized inputs.
class LinearModel : public Scorer {
 public:
  LinearModel() = default;
  // Zero weights, identity standardization.
  explicit LinearModel(std::vector<std::string> manifest);

  int feature_version = 0;
  std::vector<double> weights;
  double bias = 0;
  std::vector<double> mean;
  std::vector<double> stddev;

  const std::vector<std::string>& manifest() const override { return manifest_; }
  double score_row(std::span<const double> row, std::size_t) const override {
    return predict_proba(row);
  }

  // Row in manifest order. Throws Error(shape) on a length mismatch.
  double predict_proba(std::span<const double> row) const;
  double decision_value(std::span<const double> row) const;

  // Fits mean/std from data; constant columns get std 1.
  void fit_standardization(const NumericMatrix& data);

  std::string to_json() const;
  static LinearModel from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static LinearModel load(const std::filesystem::path& path);

 private:
  std::vector<std::string> manifest_;
};

struct Gradient {
  std::vector<double> weights;
  double bias = 0;
};

// mean_i c_i * (softplus(z_i) - y_i z_i) + l2 * |w|^2, with c_i = pos_weight for
// positives and 1 otherwise; bias is not regularized.
double loss(const LinearModel& model, const NumericMatrix& batch, const Objective& objective);
Gradient gradient(const LinearModel& model, const NumericMatrix& batch, const Objective& objective);

struct FitReport {
  std::vector<double> loss_history;  // accepted losses, starting with the initial loss
  int epochs_run = 0;
  int rejected_steps = 0;
  bool converged = false;
};

// Throws Error(invalid_argument) on a single-class or non-finite input and
// Error(divergence) naming the epoch if the loss becomes non-finite.
LinearModel fit(const NumericMatrix& train, const TrainConfig& config, FitReport* report = nullptr);

}  // namespace flightsense
