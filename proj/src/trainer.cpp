#include "flightsense/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "flightsense/error.hpp"

namespace flightsense {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::size_t kShardRows = 4096;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

// Standardized copy of the design matrix; fit works on this directly.
struct Design {
  std::size_t rows = 0, cols = 0;
  std::vector<double> x;
  const std::vector<double>* y = nullptr;
};

Design standardize(const LinearModel& model, const NumericMatrix& m) {
  Design d{m.rows(), m.cols(), std::vector<double>(m.values.size()), &m.targets};
  for (std::size_t i = 0; i < d.rows; ++i)
    for (std::size_t j = 0; j < d.cols; ++j)
      d.x[i * d.cols + j] = (m.values[i * d.cols + j] - model.mean[j]) / model.stddev[j];
  return d;
}

// Unnormalized sums over one shard: loss, weight gradient, bias gradient.
struct Partial {
  double loss = 0;
  std::vector<double> gw;
  double gb = 0;

  void add(const Partial& o) {
    loss += o.loss;
    for (std::size_t j = 0; j < gw.size(); ++j) gw[j] += o.gw[j];
    gb += o.gb;
  }
};

Partial shard_partial(const Design& d, std::span<const double> w, double b, const Objective& obj,
                      std::size_t lo, std::size_t hi) {
  Partial p;
  p.gw.assign(d.cols, 0.0);
  for (std::size_t i = lo; i < hi; ++i) {
    const double* xi = d.x.data() + i * d.cols;
    double z = b;
    for (std::size_t j = 0; j < d.cols; ++j) z += w[j] * xi[j];
    const double y = (*d.y)[i];
    const double c = y > 0.5 ? obj.pos_weight : 1.0;
    p.loss += c * (softplus(z) - y * z);
    const double r = c * (sigmoid(z) - y);
    for (std::size_t j = 0; j < d.cols; ++j) p.gw[j] += r * xi[j];
    p.gb += r;
  }
  return p;
}

struct LossGrad {
  double loss = 0;
  Gradient grad;
};

// Fixed shard boundaries and a pairwise tree reduction keep the result
// independent of the worker count.
LossGrad evaluate(const Design& d, std::span<const double> w, double b, const Objective& obj,
                  unsigned workers) {
  const std::size_t shards = std::max<std::size_t>(1, (d.rows + kShardRows - 1) / kShardRows);
  std::vector<Partial> parts(shards);
  auto run = [&](std::size_t s) {
    parts[s] = shard_partial(d, w, b, obj, s * kShardRows, std::min(d.rows, (s + 1) * kShardRows));
  };
  const unsigned n_threads = static_cast<unsigned>(std::min<std::size_t>(workers, shards));
  if (n_threads <= 1) {
    for (std::size_t s = 0; s < shards; ++s) run(s);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t s = t; s < shards; s += n_threads) run(s);
      });
    for (auto& th : pool) th.join();
  }
  for (std::size_t stride = 1; stride < shards; stride *= 2)
    for (std::size_t s = 0; s + stride < shards; s += 2 * stride) parts[s].add(parts[s + stride]);

  const double n = static_cast<double>(std::max<std::size_t>(d.rows, 1));
  LossGrad out;
  double reg = 0;
  for (double wj : w) reg += wj * wj;
  out.loss = parts[0].loss / n + obj.l2 * reg;
  out.grad.weights.resize(d.cols);
  for (std::size_t j = 0; j < d.cols; ++j) out.grad.weights[j] = parts[0].gw[j] / n + 2 * obj.l2 * w[j];
  out.grad.bias = parts[0].gb / n;
  return out;
}

void require_aligned(const LinearModel& model, const NumericMatrix& m) {
  if (m.cols() != model.weights.size() || m.feature_names != model.manifest()) check_manifest(m, model);
}

unsigned resolve_workers(unsigned w) {
  if (w) return w;
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace

LinearModel::LinearModel(std::vector<std::string> manifest)
    : weights(manifest.size(), 0.0),
      mean(manifest.size(), 0.0),
      stddev(manifest.size(), 1.0),
      manifest_(std::move(manifest)) {}

double LinearModel::decision_value(std::span<const double> row) const {
  if (row.size() != weights.size())
    throw Error(ErrorCode::shape, "row has " + std::to_string(row.size()) + " values, model expects " +
                                      std::to_string(weights.size()));
  double z = bias;
  for (std::size_t j = 0; j < row.size(); ++j) z += weights[j] * (row[j] - mean[j]) / stddev[j];
  return z;
}

double LinearModel::predict_proba(std::span<const double> row) const { return sigmoid(decision_value(row)); }

void LinearModel::fit_standardization(const NumericMatrix& data) {
  const std::size_t n = data.rows(), k = data.cols();
  mean.assign(k, 0.0);
  stddev.assign(k, 1.0);
  if (n == 0) return;
  for (std::size_t j = 0; j < k; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += data.values[i * k + j];
    const double mu = s / static_cast<double>(n);
    double ss = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dlt = data.values[i * k + j] - mu;
      ss += dlt * dlt;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n));
    mean[j] = mu;
    stddev[j] = sd > 1e-12 * std::max(1.0, std::abs(mu)) ? sd : 1.0;
  }
}

std::string LinearModel::to_json() const {
  json j;
  j["feature_version"] = feature_version;
  j["manifest"] = manifest_;
  j["weights"] = weights;
  j["bias"] = bias;
  j["standardization"] = {{"mean", mean}, {"std", stddev}};
  return j.dump(2);
}

LinearModel LinearModel::from_json(const std::string& text) {
  LinearModel m;
  try {
    const json j = json::parse(text);
    m.manifest_ = j.at("manifest").get<std::vector<std::string>>();
    m.feature_version = j.value("feature_version", 0);
    m.weights = j.at("weights").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
    m.mean = j.at("standardization").at("mean").get<std::vector<double>>();
    m.stddev = j.at("standardization").at("std").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format, std::string("invalid model file: ") + e.what());
  }
  const std::size_t k = m.manifest_.size();
  if (m.weights.size() != k || m.mean.size() != k || m.stddev.size() != k)
    throw Error(ErrorCode::format, "model manifest, weights and standardization differ in length");
  for (double s : m.stddev)
    if (!(s > 0)) throw Error(ErrorCode::format, "model standardization has a non-positive std");
  return m;
}

void LinearModel::save(const fs::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << to_json() << '\n';
}

LinearModel LinearModel::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

double loss(const LinearModel& model, const NumericMatrix& batch, const Objective& objective) {
  require_aligned(model, batch);
  return evaluate(standardize(model, batch), model.weights, model.bias, objective, 1).loss;
}

Gradient gradient(const LinearModel& model, const NumericMatrix& batch, const Objective& objective) {
  require_aligned(model, batch);
  return evaluate(standardize(model, batch), model.weights, model.bias, objective, 1).grad;
}

LinearModel fit(const NumericMatrix& train, const TrainConfig& config, FitReport* report) {
  if (!(config.learning_rate > 0) || config.epochs < 0 || !(config.l2 >= 0) || !(config.pos_weight > 0))
    throw Error(ErrorCode::invalid_argument, "invalid training configuration");
  bool pos = false, neg = false;
  for (double y : train.targets) {
    if (y == 1.0) pos = true;
    else if (y == 0.0) neg = true;
    else throw Error(ErrorCode::invalid_argument, "targets must be 0 or 1");
  }
  if (!pos || !neg) throw Error(ErrorCode::invalid_argument, "training targets contain a single class");
  for (std::size_t i = 0; i < train.values.size(); ++i)
    if (!std::isfinite(train.values[i]))
      throw Error(ErrorCode::invalid_argument,
                  "non-finite value at row " + std::to_string(i / std::max<std::size_t>(1, train.cols())) +
                      ", column " + train.feature_names[i % train.cols()]);

  LinearModel model(train.feature_names);
  model.fit_standardization(train);
  const Design d = standardize(model, train);
  const Objective obj = config.objective();
  const unsigned workers = resolve_workers(config.workers);

  FitReport rep;
  LossGrad cur = evaluate(d, model.weights, model.bias, obj, workers);
  rep.loss_history.push_back(cur.loss);
  double lr = config.learning_rate;
  std::vector<double> w_next(model.weights.size());
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rep.epochs_run = epoch;
    for (std::size_t j = 0; j < w_next.size(); ++j) w_next[j] = model.weights[j] - lr * cur.grad.weights[j];
    const double b_next = model.bias - lr * cur.grad.bias;
    LossGrad next = evaluate(d, w_next, b_next, obj, workers);
    if (!std::isfinite(next.loss))
      throw Error(ErrorCode::divergence, "training loss became non-finite at epoch " + std::to_string(epoch));
    if (next.loss > cur.loss) {
      lr *= 0.5;
      ++rep.rejected_steps;
      if (lr < 1e-12) {
        rep.converged = true;
        break;
      }
      continue;
    }
    const double improvement = cur.loss - next.loss;
    model.weights = w_next;
    model.bias = b_next;
    cur = std::move(next);
    rep.loss_history.push_back(cur.loss);
    if (improvement < config.tolerance * std::max(1.0, cur.loss)) {
      rep.converged = true;
      break;
    }
  }
  if (report) *report = std::move(rep);
  return model;
}

}  // namespace flightsense
