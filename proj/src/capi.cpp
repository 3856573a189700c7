#include "flightsense/flightsense.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "flightsense/dataset.hpp"
#include "flightsense/error.hpp"
#include "flightsense/evaluation.hpp"
#include "flightsense/features.hpp"
#include "flightsense/ingest.hpp"
#include "flightsense/scoring.hpp"
#include "flightsense/service.hpp"
#include "flightsense/synthgen.hpp"
#include "flightsense/trainer.hpp"
#include "flightsense/weather.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace flightsense;

struct fs_risk_engine {
  RiskConfig config;
};

struct fs_model {
  LinearModel model;
};

struct fs_service {
  std::shared_ptr<PredictionService> service;
  std::unique_ptr<HttpServer> server;
};

namespace {

thread_local std::string g_error;
thread_local std::string g_field;

fs_status fail(fs_status status, const std::string& message, const std::string& field = {}) {
  g_error = message;
  g_field = field;
  return status;
}

template <typename F>
fs_status guard(F&& body) {
  g_error.clear();
  g_field.clear();
  try {
    body();
    return FS_OK;
  } catch (const Error& e) {
    return fail(static_cast<fs_status>(e.code()), e.what(), e.field());
  } catch (const json::exception& e) {
    return fail(FS_ERR_CONFIG, std::string("invalid JSON argument: ") + e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(FS_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(FS_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(FS_ERR_INTERNAL, e.what());
  }
}

void require(const void* p, const char* name) {
  if (!p) throw Error(ErrorCode::invalid_argument, std::string(name) + " must not be NULL");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put(char** out, const std::string& s) {
  if (out) *out = dup(s);
}

json parse_config(const char* text) {
  if (!text || !*text) return json::object();
  json j = json::parse(text);
  if (!j.is_object()) throw Error(ErrorCode::config, "configuration must be a JSON object");
  return j;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::io, "cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json clean_json(const CleanStats& c) {
  return {{"input", c.input},           {"missing_target", c.missing_target},
          {"missing_tail", c.missing_tail}, {"missing_dep_time", c.missing_dep_time},
          {"cancelled", c.cancelled},     {"invalid_calendar", c.invalid_calendar},
          {"dropped", c.dropped()},       {"kept", c.kept}};
}

TrainConfig train_config(const json& j, double auto_pos_weight, bool* is_auto = nullptr) {
  TrainConfig cfg;
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.l2 = j.value("l2", cfg.l2);
  cfg.tolerance = j.value("tolerance", cfg.tolerance);
  cfg.workers = j.value("workers", cfg.workers);
  bool automatic = true;
  if (j.contains("pos_weight")) {
    const auto& pw = j["pos_weight"];
    if (pw.is_string()) {
      if (pw.get<std::string>() != "auto") throw Error(ErrorCode::config, "pos_weight must be a number or \"auto\"");
    } else {
      cfg.pos_weight = pw.get<double>();
      automatic = false;
    }
  }
  if (automatic) cfg.pos_weight = auto_pos_weight;
  if (is_auto) *is_auto = automatic;
  return cfg;
}

// Raw CSVs are ingested into a scratch directory first.
std::vector<FlightRecord> load_corpus(const fs::path& dir) {
  if (!list_checkpoints(dir).empty()) return load_checkpoints(dir);
  std::random_device rd;
  const fs::path scratch = fs::temp_directory_path() / ("flightsense-" + std::to_string(rd()) + std::to_string(rd()));
  struct Cleanup {
    fs::path p;
    ~Cleanup() {
      std::error_code ec;
      fs::remove_all(p, ec);
    }
  } cleanup{scratch};
  ingest_directory(dir, scratch);
  return load_checkpoints(scratch);
}

fs::path sibling_or(const json& cfg, const char* key, const fs::path& model, const char* default_name) {
  if (cfg.contains(key)) return cfg[key].get<std::string>();
  if (model.empty()) return {};
  const fs::path p = model.parent_path() / default_name;
  return fs::exists(p) ? p : fs::path{};
}

}  // namespace

extern "C" {

const char* fs_version(void) { return "1.0.0"; }

const char* fs_status_name(fs_status status) {
  if (status == FS_OK) return "ok";
  return error_code_name(static_cast<ErrorCode>(status));
}

const char* fs_last_error(void) { return g_error.c_str(); }
const char* fs_last_error_field(void) { return g_field.c_str(); }
void fs_string_free(char* s) { std::free(s); }

fs_status fs_synth(const char* config_json, const char* out_dir, char** summary_json) {
  return guard([&] {
    require(out_dir, "out_dir");
    const json j = parse_config(config_json);
    SynthConfig cfg;
    cfg.n_aircraft = j.value("aircraft", cfg.n_aircraft);
    cfg.days = j.value("days", cfg.days);
    cfg.legs_min = j.value("legs_min", cfg.legs_min);
    cfg.legs_max = j.value("legs_max", cfg.legs_max);
    cfg.base_delay_rate = j.value("base_delay_rate", cfg.base_delay_rate);
    cfg.propagation_strength = j.value("propagation_strength", cfg.propagation_strength);
    cfg.weather_effect = j.value("weather_effect", cfg.weather_effect);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.dirty_rate = j.value("dirty_rate", cfg.dirty_rate);
    cfg.workers = j.value("workers", cfg.workers);
    const auto corpus = generate(cfg);
    const auto files = write_corpus(corpus, out_dir);
    json s;
    s["rows"] = corpus.flights.size();
    s["weather_rows"] = corpus.weather.size();
    s["flight_files"] = json::array();
    for (const auto& f : files.flight_files) s["flight_files"].push_back(f.filename().string());
    s["weather_file"] = files.weather_file.filename().string();
    put(summary_json, s.dump(2));
  });
}

fs_status fs_ingest(const char* in_dir, const char* out_dir, int first_month, int last_month,
                    char** summary_json) {
  return guard([&] {
    require(in_dir, "in_dir");
    require(out_dir, "out_dir");
    if (first_month < 1 || last_month > 12 || first_month > last_month)
      throw Error(ErrorCode::invalid_argument, "month range must lie within 1..12");
    IngestOptions opt;
    opt.first_month = first_month;
    opt.last_month = last_month;
    const auto sum = ingest_directory(in_dir, out_dir, opt);
    json s;
    s["files"] = json::array();
    for (const auto& f : sum.files)
      s["files"].push_back({{"file", f.file}, {"month", f.month}, {"rows", f.parse.rows},
                            {"skipped_columns", f.parse.skipped_columns}, {"clean", clean_json(f.clean)}});
    s["skipped_files"] = sum.skipped_files;
    s["totals"] = clean_json(sum.totals);
    put(summary_json, s.dump(2));
  });
}

fs_status fs_weather_join(const char* checkpoint_dir, const char* weather_csv, const char* stations_json_path,
                          char** summary_json) {
  return guard([&] {
    require(checkpoint_dir, "checkpoint_dir");
    require(weather_csv, "weather_csv");
    const auto stations = stations_json_path ? StationMap::load(stations_json_path) : StationMap::defaults();
    WeatherLoadStats ls;
    const ObservationIndex index(load_observations(fs::path(weather_csv), &ls));
    const auto files = list_checkpoints(checkpoint_dir);
    if (files.empty()) throw Error(ErrorCode::not_found, std::string("no checkpoints in ") + checkpoint_dir);
    JoinStats total;
    for (const auto& f : files) {
      auto cp = read_checkpoint(f);
      const auto st = join_weather(cp.records, index, stations, nullptr);
      total.rows += st.rows;
      total.observed += st.observed;
      write_checkpoint(cp.records, cp.month, f, true);
    }
    json s;
    s["checkpoints"] = files.size();
    s["rows"] = total.rows;
    s["observed"] = total.observed;
    s["unmatched"] = total.rows - total.observed;
    s["observation_rows"] = ls.rows;
    s["duplicate_observations"] = ls.duplicates;
    s["invalid_values"] = ls.invalid_values;
    put(summary_json, s.dump(2));
  });
}

fs_status fs_build_features(int version, const char* checkpoint_dir, const char* matrix_out, const char* rates_out,
                            char** summary_json) {
  return guard([&] {
    require(checkpoint_dir, "checkpoint_dir");
    require(matrix_out, "matrix_out");
    if (version < 1 || version > 3) throw Error(ErrorCode::invalid_argument, "feature version must be 1, 2 or 3");
    bool weather = false;
    auto records = load_checkpoints(checkpoint_dir, &weather);
    if (records.empty()) throw Error(ErrorCode::not_found, std::string("no records in ") + checkpoint_dir);
    if (version == 3 && !weather)
      throw Error(ErrorCode::contract, "version 3 features need weather-joined checkpoints");
    const auto built = build_features(version, std::move(records));
    for (const char* p : {matrix_out, rates_out})
      if (p && fs::path(p).has_parent_path()) fs::create_directories(fs::path(p).parent_path());
    write_feature_matrix(built.matrix, matrix_out);
    if (rates_out) built.rates.save(rates_out);
    json s;
    s["version"] = version;
    s["rows"] = built.matrix.rows();
    s["features"] = built.matrix.columns.size();
    s["global_delay_rate"] = built.rates.global_rate();
    put(summary_json, s.dump(2));
  });
}

fs_status fs_split(const char* matrix_csv, uint64_t seed, const char* out_dir, char** summary_json) {
  return guard([&] {
    require(matrix_csv, "matrix_csv");
    require(out_dir, "out_dir");
    const auto sum = split_to_directory(read_feature_matrix(matrix_csv), seed, out_dir);
    json s = json::parse(sum.manifest.to_json());
    s["medians"] = sum.medians;
    put(summary_json, s.dump(2));
  });
}

fs_status fs_train(const char* train_csv, const char* val_csv, const char* manifest_path, const char* config_json,
                   const char* model_out, char** summary_json) {
  return guard([&] {
    require(train_csv, "train_csv");
    require(model_out, "model_out");
    const fs::path man_path = manifest_path ? fs::path(manifest_path) : fs::path(train_csv).parent_path() / "manifest.json";
    const auto manifest = DatasetManifest::load(man_path);
    const auto train = import_partition(train_csv, manifest.features);
    bool automatic = false;
    const auto cfg = train_config(parse_config(config_json), scale_pos_weight(train.targets), &automatic);
    FitReport rep;
    auto model = fit(train, cfg, &rep);
    model.feature_version = manifest.version;
    if (fs::path(model_out).has_parent_path()) fs::create_directories(fs::path(model_out).parent_path());
    model.save(model_out);

    json s;
    s["feature_version"] = manifest.version;
    s["features"] = manifest.features.size();
    s["pos_weight"] = cfg.pos_weight;
    s["pos_weight_auto"] = automatic;
    s["epochs_run"] = rep.epochs_run;
    s["rejected_steps"] = rep.rejected_steps;
    s["converged"] = rep.converged;
    s["initial_loss"] = rep.loss_history.front();
    s["final_loss"] = rep.loss_history.back();
    s["train_auc"] = roc_auc(batch_score(model, train), train.targets);
    if (val_csv) {
      const auto val = import_partition(val_csv, manifest.features);
      s["val_auc"] = roc_auc(batch_score(model, val), val.targets);
    }
    put(summary_json, s.dump(2));
  });
}

fs_status fs_evaluate(const char* model_path, const char* test_csv, char** report_json) {
  return guard([&] {
    require(model_path, "model_path");
    require(test_csv, "test_csv");
    const auto model = LinearModel::load(model_path);
    const auto test = import_partition(test_csv, model.manifest());
    const EvalReport r = evaluate_scorer(model, test, model.feature_version);
    put(report_json, reports_to_json(std::span(&r, 1)));
  });
}

fs_status fs_ablate(const char* flights_dir, const char* weather_csv, uint64_t seed, const char* train_config_json,
                    char** report_json) {
  return guard([&] {
    require(flights_dir, "flights_dir");
    require(weather_csv, "weather_csv");
    AblationOptions opt;
    opt.seed = seed;
    bool automatic = true;
    opt.train = train_config(parse_config(train_config_json), 1.0, &automatic);
    opt.auto_pos_weight = automatic;
    const auto weather = load_observations(fs::path(weather_csv));
    const auto reports = ablate(load_corpus(flights_dir), weather, opt);
    put(report_json, reports_to_json(reports));
  });
}

fs_status fs_risk_engine_create(const char* config_json, fs_risk_engine** out) {
  return guard([&] {
    require(out, "out");
    auto e = std::make_unique<fs_risk_engine>();
    if (config_json) e->config = RiskConfig::from_json(config_json);
    *out = e.release();
  });
}

void fs_risk_engine_destroy(fs_risk_engine* engine) { delete engine; }

fs_status fs_risk_compound(const fs_risk_engine* engine, const char* const* conditions, size_t count,
                           double* probability, int* capped) {
  return guard([&] {
    require(engine, "engine");
    require(probability, "probability");
    if (count) require(conditions, "conditions");
    RiskConditions active;
    for (size_t i = 0; i < count; ++i) {
      require(conditions[i], "condition name");
      active.set(condition_from_name(conditions[i]));
    }
    const auto est = compound_risk(active, engine->config);
    *probability = est.probability;
    if (capped) *capped = est.capped ? 1 : 0;
  });
}

const char* fs_risk_tier(double probability) {
  static const std::string names[] = {"high", "moderate", "low", "on-time"};
  return names[static_cast<int>(tier(probability))].c_str();
}

fs_status fs_model_load(const char* path, fs_model** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new fs_model{LinearModel::load(path)};
  });
}

void fs_model_destroy(fs_model* model) { delete model; }

size_t fs_model_feature_count(const fs_model* model) { return model ? model->model.manifest().size() : 0; }

int fs_model_feature_version(const fs_model* model) { return model ? model->model.feature_version : 0; }

fs_status fs_model_predict(const fs_model* model, const char* const* names, const double* values, size_t count,
                           double* probability) {
  return guard([&] {
    require(model, "model");
    require(probability, "probability");
    if (count) {
      require(names, "names");
      require(values, "values");
    }
    std::vector<std::string> cols;
    for (size_t i = 0; i < count; ++i) {
      require(names[i], "feature name");
      cols.emplace_back(names[i]);
    }
    *probability = score(cols, std::span<const double>(values, count), model->model);
  });
}

fs_status fs_service_create(const char* config_json, fs_service** out) {
  return guard([&] {
    require(out, "out");
    const json cfg = parse_config(config_json);
    ServiceAssets assets;
    fs::path model_path;
    if (cfg.contains("model")) {
      model_path = cfg["model"].get<std::string>();
      assets.model = LinearModel::load(model_path);
    }
    if (auto p = sibling_or(cfg, "mappings", model_path, "category_mappings.json"); !p.empty())
      assets.encoding = EncodingMap::load(p);
    if (auto p = sibling_or(cfg, "rates", model_path, "rates.json"); !p.empty()) assets.rates = RateTable::load(p);
    if (auto p = sibling_or(cfg, "medians", model_path, "imputation_medians.json"); !p.empty())
      assets.feature_medians = json::parse(slurp(p)).get<std::map<std::string, double>>();
    if (cfg.contains("risk_config")) assets.risk = RiskConfig::load(cfg["risk_config"].get<std::string>());
    if (cfg.contains("stations")) assets.stations = StationMap::load(cfg["stations"].get<std::string>());
    if (cfg.contains("metrics")) assets.metrics_json = json::parse(slurp(cfg["metrics"].get<std::string>())).dump();
    assets.year = cfg.value("year", assets.year);

    std::vector<WeatherObservation> base;
    if (cfg.contains("weather")) base = load_observations(fs::path(cfg["weather"].get<std::string>()));
    auto store = std::make_shared<WeatherStore>(std::move(base));
    if (cfg.contains("weather_dir"))
      store->start_polling(cfg["weather_dir"].get<std::string>(),
                           std::chrono::milliseconds(cfg.value("poll_ms", 60000)));

    auto svc = std::make_unique<fs_service>();
    svc->service = std::make_shared<PredictionService>(std::move(assets), std::move(store));
    *out = svc.release();
  });
}

void fs_service_destroy(fs_service* service) {
  if (!service) return;
  if (service->server) service->server->stop();
  service->service->weather_store().stop_polling();
  delete service;
}

fs_status fs_service_predict(fs_service* service, const char* request_json, char** response_json) {
  return guard([&] {
    require(service, "service");
    require(request_json, "request_json");
    const auto req = PredictRequest::from_json(request_json, service->service->assets().year);
    put(response_json, service->service->predict(req).to_json());
  });
}

fs_status fs_service_start(fs_service* service, const char* host, int port, int* bound_port) {
  return guard([&] {
    require(service, "service");
    if (service->server) throw Error(ErrorCode::invalid_argument, "service is already serving");
    service->server = std::make_unique<HttpServer>(service->service);
    const int p = service->server->start(host ? host : "127.0.0.1", port);
    if (bound_port) *bound_port = p;
  });
}

fs_status fs_service_run(fs_service* service, const char* host, int port) {
  return guard([&] {
    require(service, "service");
    if (service->server) throw Error(ErrorCode::invalid_argument, "service is already serving");
    service->server = std::make_unique<HttpServer>(service->service);
    service->server->run(host ? host : "0.0.0.0", port);
  });
}

void fs_service_stop(fs_service* service) {
  if (service && service->server) service->server->stop();
}

}  // extern "C"
