/* FlightSense C API.
 *
 * Every function returns an fs_status. On failure fs_last_error() describes
 * the problem for the calling thread. Strings returned through char** out
 * parameters are heap-allocated and must be released with fs_string_free().
 */
#ifndef FLIGHTSENSE_H
#define FLIGHTSENSE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(FLIGHTSENSE_BUILDING)
#    define FS_API __declspec(dllexport)
#  else
#    define FS_API __declspec(dllimport)
#  endif
#else
#  define FS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fs_status {
  FS_OK = 0,
  FS_ERR_INVALID_ARGUMENT = 1,
  FS_ERR_SCHEMA = 2,
  FS_ERR_PARSE = 3,
  FS_ERR_FORMAT = 4,
  FS_ERR_CORRUPT = 5,
  FS_ERR_DOMAIN = 6,
  FS_ERR_CONTRACT = 7,
  FS_ERR_CONFIG = 8,
  FS_ERR_SHAPE = 9,
  FS_ERR_DIVERGENCE = 10,
  FS_ERR_UNDEFINED_METRIC = 11,
  FS_ERR_IO = 12,
  FS_ERR_VALIDATION = 13,
  FS_ERR_NOT_FOUND = 14,
  FS_ERR_INTERNAL = 99
} fs_status;

FS_API const char* fs_version(void);
FS_API const char* fs_status_name(fs_status status);
/* Message of the last failed call on this thread; "" if none. */
FS_API const char* fs_last_error(void);
/* Offending input field of the last failure (validation errors); "" if none. */
FS_API const char* fs_last_error_field(void);
FS_API void fs_string_free(char* s);

/* ---- pipeline stages; summaries are JSON documents ---- */

/* config_json: {"aircraft", "days", "legs_min", "legs_max", "base_delay_rate",
 * "propagation_strength", "weather_effect", "seed", "dirty_rate", "workers"}; all optional. */
FS_API fs_status fs_synth(const char* config_json, const char* out_dir, char** summary_json);

FS_API fs_status fs_ingest(const char* in_dir, const char* out_dir, int first_month, int last_month,
                           char** summary_json);

/* Attaches observed origin weather to every checkpoint in checkpoint_dir, in
 * place. stations_json_path may be NULL for the default ten-airport map. */
FS_API fs_status fs_weather_join(const char* checkpoint_dir, const char* weather_csv,
                                 const char* stations_json_path, char** summary_json);

/* Checkpoints -> feature matrix CSV plus the rate table JSON. rates_out may be NULL. */
FS_API fs_status fs_build_features(int version, const char* checkpoint_dir, const char* matrix_out,
                                   const char* rates_out, char** summary_json);

FS_API fs_status fs_split(const char* matrix_csv, uint64_t seed, const char* out_dir, char** summary_json);

/* manifest_path may be NULL to use manifest.json next to train_csv; val_csv
 * may be NULL. config_json: {"learning_rate", "epochs", "l2", "tolerance",
 * "workers", "pos_weight": number | "auto"}. */
FS_API fs_status fs_train(const char* train_csv, const char* val_csv, const char* manifest_path,
                          const char* config_json, const char* model_out, char** summary_json);

FS_API fs_status fs_evaluate(const char* model_path, const char* test_csv, char** report_json);

/* flights_dir holds raw monthly CSVs or checkpoints. */
FS_API fs_status fs_ablate(const char* flights_dir, const char* weather_csv, uint64_t seed,
                           const char* train_config_json, char** report_json);

/* ---- rule engine ---- */

typedef struct fs_risk_engine fs_risk_engine;

/* config_json may be NULL for the default multipliers. */
FS_API fs_status fs_risk_engine_create(const char* config_json, fs_risk_engine** out);
FS_API void fs_risk_engine_destroy(fs_risk_engine* engine);
/* conditions: names such as "any_snow"; unknown names fail with FS_ERR_CONFIG. */
FS_API fs_status fs_risk_compound(const fs_risk_engine* engine, const char* const* conditions, size_t count,
                                  double* probability, int* capped);
/* "high", "moderate", "low" or "on-time". */
FS_API const char* fs_risk_tier(double probability);

/* ---- trained model ---- */

typedef struct fs_model fs_model;

FS_API fs_status fs_model_load(const char* path, fs_model** out);
FS_API void fs_model_destroy(fs_model* model);
FS_API size_t fs_model_feature_count(const fs_model* model);
FS_API int fs_model_feature_version(const fs_model* model);
/* Values are matched to the model manifest by name. */
FS_API fs_status fs_model_predict(const fs_model* model, const char* const* names, const double* values,
                                  size_t count, double* probability);

/* ---- prediction service ---- */

typedef struct fs_service fs_service;

/* config_json: {"model", "mappings", "rates", "medians", "weather", "weather_dir",
 * "poll_ms", "risk_config", "metrics", "stations", "year"}; all optional.
 * Paths left out next to the model (category_mappings.json, rates.json,
 * imputation_medians.json) are picked up automatically. */
FS_API fs_status fs_service_create(const char* config_json, fs_service** out);
FS_API void fs_service_destroy(fs_service* service);
FS_API fs_status fs_service_predict(fs_service* service, const char* request_json, char** response_json);
/* Serves on a background thread; port 0 picks a free port. */
FS_API fs_status fs_service_start(fs_service* service, const char* host, int port, int* bound_port);
/* Serves on the calling thread until fs_service_stop() is called from another thread. */
FS_API fs_status fs_service_run(fs_service* service, const char* host, int port);
FS_API void fs_service_stop(fs_service* service);

#ifdef __cplusplus
}
#endif

#endif /* FLIGHTSENSE_H */
