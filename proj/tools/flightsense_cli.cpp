// flightsense command-line front end. Talks to the library only through the C API.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "flightsense/flightsense.h"

using json = nlohmann::json;

namespace {

struct Failure {
  int exit_code;
};

void check(fs_status st) {
  if (st == FS_OK) return;
  std::cerr << "error (" << fs_status_name(st) << "): " << fs_last_error();
  if (*fs_last_error_field()) std::cerr << " [field: " << fs_last_error_field() << "]";
  std::cerr << '\n';
  throw Failure{1};
}

// Prints and frees a library-owned string.
void emit(char* s, const std::string& path = {}) {
  if (!s) return;
  if (path.empty()) {
    std::cout << s << '\n';
  } else {
    std::ofstream out(path);
    out << s << '\n';
    if (!out) {
      fs_string_free(s);
      std::cerr << "error: cannot write " << path << '\n';
      throw Failure{1};
    }
  }
  fs_string_free(s);
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? v : fallback;
}

std::pair<int, int> parse_months(const std::string& text) {
  int a = 0, b = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%d..%d%c", &a, &b, &tail) == 2) return {a, b};
  if (std::sscanf(text.c_str(), "%d%c", &a, &tail) == 1) return {a, a};
  throw CLI::ValidationError("--months", "expected N or A..B, got '" + text + "'");
}

struct ServiceFlags {
  std::string model, mappings, rates, medians, weather, weather_dir, risk_config, metrics, stations;
  int poll_ms = 60000;
  int year = 2018;

  void add(CLI::App* app) {
    app->add_option("--model", model, "Trained model JSON ($FLIGHTSENSE_MODEL)");
    app->add_option("--mappings", mappings, "category_mappings.json (default: next to the model)");
    app->add_option("--rates", rates, "Rate table JSON (default: rates.json next to the model)");
    app->add_option("--medians", medians, "imputation_medians.json (default: next to the model)");
    app->add_option("--weather", weather, "Weather observation CSV");
    app->add_option("--weather-dir", weather_dir, "Directory of observation CSVs to watch ($FLIGHTSENSE_WEATHER_DIR)");
    app->add_option("--poll-ms", poll_ms, "Weather directory poll interval");
    app->add_option("--risk-config", risk_config, "Rule engine multipliers JSON ($FLIGHTSENSE_RISK_CONFIG)");
    app->add_option("--metrics", metrics, "Report JSON served at /metrics");
    app->add_option("--stations", stations, "IATA to station map JSON");
    app->add_option("--year", year, "Calendar year requests must fall in");
  }

  std::string config_json() const {
    json j;
    auto set = [&](const char* key, const std::string& v) {
      if (!v.empty()) j[key] = v;
    };
    set("model", model.empty() ? env_or("FLIGHTSENSE_MODEL", "") : model);
    set("mappings", mappings);
    set("rates", rates);
    set("medians", medians);
    set("weather", weather);
    set("weather_dir", weather_dir.empty() ? env_or("FLIGHTSENSE_WEATHER_DIR", "") : weather_dir);
    set("risk_config", risk_config.empty() ? env_or("FLIGHTSENSE_RISK_CONFIG", "") : risk_config);
    set("metrics", metrics);
    set("stations", stations);
    j["poll_ms"] = poll_ms;
    j["year"] = year;
    return j.dump();
  }
};

int run(int argc, char** argv) {
  CLI::App app{"Flight delay risk pipeline and prediction service"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic flight and weather corpus");
  std::size_t aircraft = 500;
  int days = 30, legs_min = 3, legs_max = 6;
  std::uint64_t synth_seed = 7;
  double base_rate = 0.1912, propagation = 0.8, weather_effect = 0.1, dirty = 0.01;
  std::string synth_out;
  synth->add_option("--aircraft", aircraft, "Number of aircraft")->capture_default_str();
  synth->add_option("--days", days, "Number of days")->capture_default_str();
  synth->add_option("--legs-min", legs_min)->capture_default_str();
  synth->add_option("--legs-max", legs_max)->capture_default_str();
  synth->add_option("--seed", synth_seed)->capture_default_str();
  synth->add_option("--base-delay-rate", base_rate)->capture_default_str();
  synth->add_option("--propagation-strength", propagation)->capture_default_str();
  synth->add_option("--weather-effect", weather_effect, "Delay probability per inch of snow")->capture_default_str();
  synth->add_option("--dirty-rate", dirty, "Fraction of rows followed by a defective copy")->capture_default_str();
  synth->add_option("--out", synth_out, "Output directory")->required();

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Parse, clean and checkpoint monthly flight CSVs");
  std::string ingest_in, ingest_out, months = "1..12";
  ingest->add_option("--in", ingest_in, "Directory of monthly CSVs")->required();
  ingest->add_option("--out", ingest_out, "Checkpoint directory")->required();
  ingest->add_option("--months", months, "Month or range, e.g. 3 or 1..12")->capture_default_str();

  // weather-join
  auto* wjoin = app.add_subcommand("weather-join", "Attach origin weather to checkpoints in place");
  std::string wj_in, wj_weather, wj_stations;
  wjoin->add_option("--in", wj_in, "Checkpoint directory")->required();
  wjoin->add_option("--weather", wj_weather, "Observation CSV")->required();
  wjoin->add_option("--stations", wj_stations, "IATA to station map JSON");

  // features
  auto* feats = app.add_subcommand("features", "Build a feature matrix from checkpoints");
  int version = 3;
  std::string f_in, f_out, f_rates;
  feats->add_option("--version", version, "Feature version 1, 2 or 3")->check(CLI::Range(1, 3))->capture_default_str();
  feats->add_option("--in", f_in, "Checkpoint directory")->required();
  feats->add_option("--out", f_out, "Matrix CSV")->required();
  feats->add_option("--rates", f_rates, "Where to write the rate table JSON");

  // split
  auto* split = app.add_subcommand("split", "Encode, split, impute and export partitions");
  std::string s_in, s_out;
  std::uint64_t split_seed = 42;
  split->add_option("--in", s_in, "Matrix CSV")->required();
  split->add_option("--out", s_out, "Output directory")->required();
  split->add_option("--seed", split_seed)->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "Fit the logistic-regression baseline");
  std::string t_in, t_val, t_out, t_manifest, pos_weight = "auto";
  double lr = 1.0, l2 = 1e-4;
  int epochs = 400;
  train->add_option("--in", t_in, "train.csv")->required();
  train->add_option("--val", t_val, "val.csv");
  train->add_option("--manifest", t_manifest, "manifest.json (default: next to --in)");
  train->add_option("--pos-weight", pos_weight, "Positive-class weight or 'auto'")->capture_default_str();
  train->add_option("--learning-rate", lr)->capture_default_str();
  train->add_option("--epochs", epochs)->capture_default_str();
  train->add_option("--l2", l2)->capture_default_str();
  train->add_option("--out", t_out, "Model JSON")->required();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Score a test partition");
  std::string e_model, e_test, e_report;
  evaluate->add_option("--model", e_model)->required();
  evaluate->add_option("--test", e_test)->required();
  evaluate->add_option("--report", e_report, "Write the report here instead of stdout");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Train and compare feature versions 1-3");
  std::string a_flights, a_weather, a_report;
  std::uint64_t ablate_seed = 42;
  ablate->add_option("--flights", a_flights, "Raw CSV or checkpoint directory")->required();
  ablate->add_option("--weather", a_weather, "Observation CSV")->required();
  ablate->add_option("--seed", ablate_seed)->capture_default_str();
  ablate->add_option("--report", a_report, "Write the report here instead of stdout");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP prediction service");
  ServiceFlags serve_flags;
  serve_flags.add(serve);
  std::string host = "0.0.0.0";
  int port = -1;
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port, "Port ($FLIGHTSENSE_PORT, default 8080)");

  // predict
  auto* predict = app.add_subcommand("predict", "One-shot local prediction");
  ServiceFlags predict_flags;
  predict_flags.add(predict);
  std::string request;
  predict->add_option("--request", request, "Request JSON, inline or @file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  char* out = nullptr;
  if (*synth) {
    json c{{"aircraft", aircraft}, {"days", days}, {"legs_min", legs_min}, {"legs_max", legs_max},
           {"seed", synth_seed}, {"base_delay_rate", base_rate}, {"propagation_strength", propagation},
           {"weather_effect", weather_effect}, {"dirty_rate", dirty}};
    check(fs_synth(c.dump().c_str(), synth_out.c_str(), &out));
    emit(out);
  } else if (*ingest) {
    std::pair<int, int> range;
    try {
      range = parse_months(months);
    } catch (const CLI::Error& e) {
      std::cerr << e.what() << '\n';
      return 2;
    }
    const auto [first, last] = range;
    check(fs_ingest(ingest_in.c_str(), ingest_out.c_str(), first, last, &out));
    emit(out);
  } else if (*wjoin) {
    check(fs_weather_join(wj_in.c_str(), wj_weather.c_str(), opt(wj_stations), &out));
    emit(out);
  } else if (*feats) {
    check(fs_build_features(version, f_in.c_str(), f_out.c_str(), opt(f_rates), &out));
    emit(out);
  } else if (*split) {
    check(fs_split(s_in.c_str(), split_seed, s_out.c_str(), &out));
    emit(out);
  } else if (*train) {
    json c{{"learning_rate", lr}, {"epochs", epochs}, {"l2", l2}};
    if (pos_weight == "auto") {
      c["pos_weight"] = "auto";
    } else {
      try {
        std::size_t used = 0;
        c["pos_weight"] = std::stod(pos_weight, &used);
        if (used != pos_weight.size()) throw std::invalid_argument(pos_weight);
      } catch (const std::exception&) {
        std::cerr << "--pos-weight: expected a number or 'auto'\n";
        return 2;
      }
    }
    check(fs_train(t_in.c_str(), opt(t_val), opt(t_manifest), c.dump().c_str(), t_out.c_str(), &out));
    emit(out);
  } else if (*evaluate) {
    check(fs_evaluate(e_model.c_str(), e_test.c_str(), &out));
    emit(out, e_report);
  } else if (*ablate) {
    check(fs_ablate(a_flights.c_str(), a_weather.c_str(), ablate_seed, nullptr, &out));
    emit(out, a_report);
  } else if (*serve) {
    if (port < 0) port = std::atoi(env_or("FLIGHTSENSE_PORT", "8080").c_str());
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    fs_service* svc = nullptr;
    check(fs_service_create(serve_flags.config_json().c_str(), &svc));
    int bound = 0;
    if (const fs_status st = fs_service_start(svc, host.c_str(), port, &bound); st != FS_OK) {
      fs_service_destroy(svc);
      check(st);
    }
    std::cout << "listening on " << host << ':' << bound << std::endl;
    int sig = 0;
    sigwait(&set, &sig);
    fs_service_destroy(svc);
  } else if (*predict) {
    std::string body = request;
    if (!body.empty() && body[0] == '@') {
      std::ifstream in(body.substr(1));
      if (!in) {
        std::cerr << "error: cannot open " << body.substr(1) << '\n';
        return 1;
      }
      std::stringstream ss;
      ss << in.rdbuf();
      body = ss.str();
    }
    fs_service* svc = nullptr;
    check(fs_service_create(predict_flags.config_json().c_str(), &svc));
    const fs_status st = fs_service_predict(svc, body.c_str(), &out);
    fs_service_destroy(svc);
    check(st);
    emit(out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: flightsense <synth|ingest|weather-join|features|split|train|evaluate|ablate|serve|predict> "
                 "[options]\nRun 'flightsense --help' for details.\n";
    return 2;
  }
  try {
    return run(argc, argv);
  } catch (const Failure& f) {
    return f.exit_code;
  }
}
