#include <httplib.h>

#include <json.hpp>
#include <thread>

#include "doctest.h"
#include "flightsense/dataset.hpp"
#include "flightsense/rng.hpp"
#include "flightsense/error.hpp"
#include "flightsense/service.hpp"
#include "flightsense/synthgen.hpp"
#include "support.hpp"

using namespace flightsense;
using json = nlohmann::json;

namespace {

const char* kRequest = R"({"airline":"AA","origin":"JFK","dest":"LAX","date":"2018-01-04",
  "crs_dep_time":"0730","distance":2475,"air_time":330})";

std::string jfk() { return *StationMap::defaults().station_for("JFK"); }

std::vector<WeatherObservation> base_weather() {
  return {{jfk(), {2018, 1, 3}, 10.f, 0.f, 0.f, 30.f, 20.f},
          {jfk(), {2018, 1, 4}, 35.3f, 0.5f, 9.8f, 21.f, 8.f},
          {*StationMap::defaults().station_for("LAX"), {2018, 1, 4}, 5.f, 0.f, std::nullopt, 70.f, 50.f}};
}

ErrorCode request_error(const std::string& text, std::string* field = nullptr) {
  try {
    PredictRequest::from_json(text, 2018);
  } catch (const Error& e) {
    if (field) *field = e.field();
    return e.code();
  }
  return ErrorCode::internal;
}

std::string with(const std::string& key, const std::string& value) {
  auto j = json::parse(kRequest);
  j[key] = json::parse(value);
  return j.dump();
}

// Trained-looking assets over a small synthetic corpus.
ServiceAssets trained_assets() {
  SynthConfig cfg;
  cfg.n_aircraft = 30;
  cfg.days = 5;
  auto build = build_features(3, generate(cfg).flights);
  ServiceAssets a;
  a.encoding = EncodingMap::fit(build.matrix);
  a.rates = build.rates;
  LinearModel model(feature_names(3));
  model.feature_version = 3;
  for (std::size_t i = 0; i < model.weights.size(); ++i) model.weights[i] = 0.01 * double(i % 5) - 0.02;
  model.bias = -1;
  a.model = model;
  for (const auto& n : weather_feature_names()) a.feature_medians[n] = 1.0;
  a.feature_medians["AirTime"] = 100;
  return a;
}

}  // namespace

TEST_CASE("request validation names the field") {
  auto r = PredictRequest::from_json(kRequest, 2018);
  CHECK(r.crs_dep_time == 730);
  CHECK(r.date == Date{2018, 1, 4});
  CHECK_FALSE(r.turnaround.has_value());

  std::string field;
  CHECK(request_error("{", &field) == ErrorCode::validation);
  CHECK(request_error(with("airline", R"("aa")"), &field) == ErrorCode::validation);
  CHECK(field == "airline");
  CHECK(request_error(with("origin", R"("JFKX")"), &field) == ErrorCode::validation);
  CHECK(field == "origin");
  CHECK(request_error(with("date", R"("2019-01-04")"), &field) == ErrorCode::validation);
  CHECK(field == "date");
  CHECK(request_error(with("date", R"("2018-02-30")"), &field) == ErrorCode::validation);
  CHECK(request_error(with("crs_dep_time", "2460"), &field) == ErrorCode::validation);
  CHECK(field == "crs_dep_time");
  CHECK(request_error(with("distance", "0"), &field) == ErrorCode::validation);
  CHECK(field == "distance");
  CHECK(request_error(with("turnaround", "-5"), &field) == ErrorCode::validation);
  CHECK(field == "turnaround");
  CHECK(request_error(with("overrides", R"({"fog": 1})"), &field) == ErrorCode::validation);
  CHECK(field == "overrides.fog");
  CHECK(request_error(with("overrides", R"({"snow": "deep"})"), &field) == ErrorCode::validation);
  CHECK(field == "overrides.snow");
}

TEST_CASE("rule-only service") {
  auto store = std::make_shared<WeatherStore>(base_weather());
  PredictionService svc(ServiceAssets{}, store);
  auto resp = svc.predict(PredictRequest::from_json(kRequest, 2018));
  CHECK_FALSE(resp.model_probability.has_value());
  CHECK_FALSE(resp.tier_from_model);
  // JFK, 35.3 mph, 0.5 in rain, snow, 07:30 on a Thursday.
  const double expect = 0.19 * 1.25 * 1.20 * 1.35 * 2.10 * 1.15;
  CHECK(resp.rule_probability == doctest::Approx(std::min(expect, 0.85)));
  CHECK(resp.rule.capped == (expect > 0.85));
  CHECK(resp.weather_source[0] == WeatherSource::observed);
  CHECK(resp.weather[2] == doctest::Approx(9.8));

  auto j = json::parse(resp.to_json());
  CHECK(j["model_probability"].is_null());
  CHECK(j["tier_source"] == "rule");
  CHECK(j["weather_used"]["wind"]["value"] == 35.3);
  CHECK(j["applied_multipliers"].size() == resp.rule.applied.size());

  auto calm = PredictRequest::from_json(with("overrides", R"({"wind": 0, "precip": 0, "snow": 0})"), 2018);
  auto r2 = svc.predict(calm);
  CHECK(r2.weather_source[0] == WeatherSource::override_value);
  CHECK(r2.rule_probability == doctest::Approx(0.19 * 1.25 * 1.15));

  auto unmonitored = PredictRequest::from_json(with("origin", R"("XYZ")"), 2018);
  auto r3 = svc.predict(unmonitored);
  for (auto s : r3.weather_source) CHECK(s == WeatherSource::imputed);

  auto lax = PredictRequest::from_json(with("origin", R"("LAX")"), 2018);
  auto r4 = svc.predict(lax);
  CHECK(r4.weather_source[0] == WeatherSource::observed);
  CHECK(r4.weather_source[2] == WeatherSource::imputed);  // null field falls back individually
}

TEST_CASE("model-backed service") {
  auto assets = trained_assets();
  auto store = std::make_shared<WeatherStore>(base_weather());
  PredictionService svc(assets, store);
  auto req = PredictRequest::from_json(kRequest, 2018);
  auto resp = svc.predict(req);
  REQUIRE(resp.model_probability.has_value());
  CHECK(resp.tier_from_model);
  CHECK(resp.tier == tier(*resp.model_probability));
  CHECK(resp.feature_version == 3);
  const auto row = svc.feature_row(req, 3);
  CHECK(*resp.model_probability == assets.model->predict_proba(row));
  CHECK(row[feature_names(3).size() - 3] == doctest::Approx(9.8));

  SUBCASE("unknown categories encode as -1") {
    auto r = svc.feature_row(PredictRequest::from_json(with("airline", R"("ZZ")"), 2018), 3);
    CHECK(r[5] == -1);
  }

  SUBCASE("turnaround means an earlier leg") {
    auto r = PredictRequest::from_json(with("turnaround", "30"), 2018);
    r.prev_arr_delay = 40;
    const auto row2 = svc.feature_row(r, 3);
    const auto& names = feature_names(3);
    auto at = [&](const char* n) { return row2[std::find(names.begin(), names.end(), n) - names.begin()]; };
    CHECK(at("is_first_flight") == 0);
    CHECK(at("turnaround") == 30);
    CHECK(at("tight_turnaround") == 1);
    CHECK(at("prev_was_delayed") == 1);
    CHECK(at("tail_daily_delay") == 40);
  }

  SUBCASE("missing assets are configuration errors") {
    auto broken = assets;
    broken.encoding.reset();
    CHECK_THROWS_AS(PredictionService(broken, store), Error);
    broken = assets;
    broken.rates.reset();
    CHECK_THROWS_AS(PredictionService(broken, store), Error);
  }
}

TEST_CASE("weather store refresh and polling") {
  fstest::TempDir dir("wx");
  auto store = std::make_shared<WeatherStore>(base_weather());
  const std::string header = "STATION,DATE,AWND,PRCP,SNOW,TMAX,TMIN\n";
  fstest::spit(dir / "a.csv", header + jfk() + ",2018-01-04,1,0,0,40,30\n");
  fstest::spit(dir / "b.csv", header + jfk() + ",2018-01-04,2,0,0,40,30\n" + jfk() + ",2018-01-05,3,0,0,40,30\n");
  CHECK(store->refresh_from_directory(dir.path()) == 2);
  auto snap = store->snapshot();
  CHECK(snap->index.find(jfk(), {2018, 1, 4})->awnd == 2.0f);
  CHECK(snap->index.find(jfk(), {2018, 1, 3})->awnd == 10.0f);  // base rows survive
  CHECK(snap->station_rows(jfk()).size() == 3);

  store->start_polling(dir.path(), std::chrono::milliseconds(20));
  const auto before = store->refresh_count();
  fstest::spit(dir / "c.csv", header + jfk() + ",2018-01-06,4,0,0,40,30\n");
  for (int i = 0; i < 200 && store->refresh_count() == before; ++i)
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  store->stop_polling();
  CHECK(store->refresh_count() > before);
  CHECK(store->snapshot()->index.find(jfk(), {2018, 1, 6}) != nullptr);
  CHECK(snap->index.find(jfk(), {2018, 1, 6}) == nullptr);  // old snapshot is immutable
}

TEST_CASE("http endpoints") {
  auto assets = trained_assets();
  assets.metrics_json = R"([{"version":3,"auc":0.7}])";
  auto svc = std::make_shared<PredictionService>(assets, std::make_shared<WeatherStore>(base_weather()));
  HttpServer server(svc);
  const int port = server.start("127.0.0.1", 0);
  REQUIRE(port > 0);
  httplib::Client cli("127.0.0.1", port);

  auto res = cli.Get("/health");
  REQUIRE(res);
  CHECK(res->status == 200);

  res = cli.Post("/predict", kRequest, "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  auto body = json::parse(res->body);
  CHECK(body["model_probability"].is_number());
  CHECK(body["rule_probability"].is_number());
  CHECK(body["tier_source"] == "model");

  res = cli.Post("/predict", with("date", R"("2018-13-01")"), "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  body = json::parse(res->body);
  CHECK(body["error"] == "validation");
  CHECK(body["field"] == "date");

  res = cli.Get("/weather");
  REQUIRE(res);
  CHECK(json::parse(res->body).size() == 10);
  res = cli.Get("/weather/JFK");
  CHECK(json::parse(res->body)["date"] == "2018-01-04");
  res = cli.Get("/weather/XXX");
  CHECK(res->status == 404);
  res = cli.Get("/weather/JFK/recent?days=5");
  CHECK(res->status == 200);
  CHECK(json::parse(res->body).size() == 2);
  res = cli.Get("/weather/JFK/recent?days=x");
  CHECK(res->status == 400);
  res = cli.Get("/metrics");
  CHECK(json::parse(res->body)[0]["auc"] == 0.7);

  SUBCASE("remote scorer matches the local model") {
    NumericMatrix m;
    m.feature_names = feature_names(3);
    Xorshift64Star rng(1);
    for (int i = 0; i < 25; ++i) {
      m.targets.push_back(i % 2);
      for (std::size_t c = 0; c < m.cols(); ++c) m.values.push_back(rng.uniform() * 10);
    }
    RemoteHttpScorer remote("http://127.0.0.1:" + std::to_string(port), feature_names(3));
    auto preds = remote.score_rows(m, 0, m.rows());
    REQUIRE(preds.size() == 25);
    for (std::size_t i = 0; i < 25; ++i) CHECK(preds[i] == assets.model->predict_proba(m.row(i)));
    CHECK(remote.score_row(m.row(4), 4) == assets.model->predict_proba(m.row(4)));
  }
  server.stop();
}

TEST_CASE("error status mapping") {
  CHECK(http_status_for(ErrorCode::validation) == 400);
  CHECK(http_status_for(ErrorCode::not_found) == 404);
  CHECK(http_status_for(ErrorCode::config) == 500);
  auto j = json::parse(error_body(ErrorCode::validation, "bad", "date"));
  CHECK(j["field"] == "date");
  CHECK(json::parse(error_body(ErrorCode::io, "x")).contains("field") == false);
}
