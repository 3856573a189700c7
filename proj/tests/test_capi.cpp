// Exercises the shared library through its C header only.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <httplib.h>

#include <cmath>
#include <json.hpp>
#include <string>

#include "flightsense/flightsense.h"
#include "support.hpp"

using json = nlohmann::json;

namespace {

// Takes ownership of a returned string.
std::string take(char* s) {
  std::string out = s ? s : "";
  fs_string_free(s);
  return out;
}

}  // namespace

TEST_CASE("status names and versions") {
  CHECK(std::string(fs_version()).size() > 0);
  CHECK(std::string(fs_status_name(FS_OK)) == "ok");
  CHECK(std::string(fs_status_name(FS_ERR_SCHEMA)) == "schema");
  CHECK(std::string(fs_status_name(FS_ERR_NOT_FOUND)) == "not_found");
}

TEST_CASE("risk engine") {
  fs_risk_engine* engine = nullptr;
  REQUIRE(fs_risk_engine_create(nullptr, &engine) == FS_OK);
  double p = 0;
  int capped = -1;
  CHECK(fs_risk_compound(engine, nullptr, 0, &p, &capped) == FS_OK);
  CHECK(p == 0.19);
  CHECK(capped == 0);

  const char* snow[] = {"any_snow"};
  CHECK(fs_risk_compound(engine, snow, 1, &p, &capped) == FS_OK);
  CHECK(std::abs(p - 0.399) <= 1e-12);

  const char* all[] = {"high_delay_airport", "high_wind", "heavy_precip", "any_snow",
                       "peak_hours", "friday_or_sunday", "prev_aircraft_delayed"};
  CHECK(fs_risk_compound(engine, all, 7, &p, &capped) == FS_OK);
  CHECK(p == 0.85);
  CHECK(capped == 1);

  const char* bad[] = {"fog"};
  CHECK(fs_risk_compound(engine, bad, 1, &p, &capped) == FS_ERR_CONFIG);
  CHECK(std::string(fs_last_error()).find("fog") != std::string::npos);
  CHECK(fs_risk_compound(engine, snow, 1, nullptr, &capped) == FS_ERR_INVALID_ARGUMENT);
  fs_risk_engine_destroy(engine);

  CHECK(fs_risk_engine_create(R"({"multipliers": {"any_snow": -1}})", &engine) == FS_ERR_CONFIG);
  CHECK(fs_risk_engine_create("{not json", &engine) != FS_OK);
  CHECK(std::string(fs_risk_tier(0.70)) == "moderate");
  CHECK(std::string(fs_risk_tier(0.30)) == "on-time");
  CHECK(std::string(fs_risk_tier(0.71)) == "high");
}

TEST_CASE("pipeline through the C API") {
  fstest::TempDir dir("capi");
  const std::string raw = (dir / "raw").string(), ck = (dir / "ck").string();
  const std::string matrix = (dir / "v3.csv").string(), split = (dir / "split").string();
  const std::string model = (dir / "split/model.json").string();
  char* out = nullptr;

  REQUIRE(fs_synth(R"({"aircraft": 60, "days": 10, "propagation_strength": 0.8, "dirty_rate": 0.01})",
                   raw.c_str(), &out) == FS_OK);
  auto synth = json::parse(take(out));
  CHECK(synth["flight_files"].size() == 1);

  REQUIRE(fs_ingest(raw.c_str(), ck.c_str(), 1, 12, &out) == FS_OK);
  auto ingest = json::parse(take(out));
  CHECK(ingest["totals"]["dropped"].get<int>() > 0);

  REQUIRE(fs_weather_join(ck.c_str(), (dir / "raw/weather.csv").c_str(), nullptr, &out) == FS_OK);
  take(out);
  REQUIRE(fs_build_features(3, ck.c_str(), matrix.c_str(), (dir / "split/rates.json").c_str(), &out) == FS_OK);
  take(out);
  REQUIRE(fs_split(matrix.c_str(), 42, split.c_str(), &out) == FS_OK);
  take(out);
  REQUIRE(fs_train((dir / "split/train.csv").c_str(), (dir / "split/val.csv").c_str(), nullptr,
                   R"({"pos_weight": "auto", "epochs": 100})", model.c_str(), &out) == FS_OK);
  auto train = json::parse(take(out));
  CHECK(train.contains("val_auc"));

  REQUIRE(fs_evaluate(model.c_str(), (dir / "split/test.csv").c_str(), &out) == FS_OK);
  auto report = json::parse(take(out));
  CHECK(report[0]["auc"].get<double>() > 0.5);

  fs_model* m = nullptr;
  REQUIRE(fs_model_load(model.c_str(), &m) == FS_OK);
  CHECK(fs_model_feature_count(m) == 27);
  CHECK(fs_model_feature_version(m) == 3);
  const char* names[] = {"Year"};
  double one = 2018, p = -1;
  CHECK(fs_model_predict(m, names, &one, 1, &p) == FS_ERR_SHAPE);
  fs_model_destroy(m);

  CHECK(fs_model_load((dir / "missing.json").c_str(), &m) == FS_ERR_IO);

  fs_service* svc = nullptr;
  json cfg = {{"model", model}, {"weather", (dir / "raw/weather.csv").string()}};
  REQUIRE(fs_service_create(cfg.dump().c_str(), &svc) == FS_OK);
  const char* request = R"({"airline":"AA","origin":"JFK","dest":"LAX","date":"2018-01-04",
                           "crs_dep_time":730,"distance":2475,"air_time":330})";
  REQUIRE(fs_service_predict(svc, request, &out) == FS_OK);
  auto resp = json::parse(take(out));
  CHECK(resp["model_probability"].is_number());
  CHECK(resp["rule_probability"].is_number());

  CHECK(fs_service_predict(svc, R"({"airline":"AA"})", &out) == FS_ERR_VALIDATION);
  CHECK(std::string(fs_last_error_field()) == "origin");

  int port = 0;
  REQUIRE(fs_service_start(svc, "127.0.0.1", 0, &port) == FS_OK);
  httplib::Client cli("127.0.0.1", port);
  auto res = cli.Get("/health");
  REQUIRE(res);
  CHECK(res->status == 200);
  res = cli.Post("/predict", request, "application/json");
  REQUIRE(res);
  CHECK(json::parse(res->body)["model_probability"] == resp["model_probability"]);
  fs_service_stop(svc);
  fs_service_destroy(svc);
}

TEST_CASE("errors surface as status codes") {
  char* out = nullptr;
  CHECK(fs_ingest("/nonexistent/dir", "/tmp/x", 1, 12, &out) == FS_ERR_IO);
  CHECK(std::string(fs_last_error()).size() > 0);
  CHECK(fs_ingest("/tmp", "/tmp/x", 5, 2, &out) == FS_ERR_INVALID_ARGUMENT);
  CHECK(fs_synth(R"({"base_delay_rate": 3})", "/tmp/never", &out) == FS_ERR_CONFIG);
  CHECK(fs_synth(nullptr, nullptr, &out) == FS_ERR_INVALID_ARGUMENT);
  CHECK(fs_build_features(7, "/tmp", "/tmp/m.csv", nullptr, &out) == FS_ERR_INVALID_ARGUMENT);
  fs_service* svc = nullptr;
  CHECK(fs_service_create(R"({"model": "/nonexistent/model.json"})", &svc) == FS_ERR_IO);
}
