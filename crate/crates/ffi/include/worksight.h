#ifndef WORKSIGHT_H
#define WORKSIGHT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes shared by every entry point.
 */
typedef enum WsStatus {
  WS_STATUS_OK = 0,
  /*
   Null pointer or non-UTF-8 string argument.
   */
  WS_STATUS_INVALID_ARGUMENT = 1,
  /*
   The request or record breaks a documented rule.
   */
  WS_STATUS_VALIDATION = 2,
  WS_STATUS_NOT_FOUND = 3,
  WS_STATUS_DUPLICATE_ID = 4,
  /*
   Storage, numerical or unexpected failure.
   */
  WS_STATUS_INTERNAL = 5,
} WsStatus;

/*
 A registered model loaded for prediction.
 */
typedef struct WsModel WsModel;

/*
 An open store together with its model registry.
 */
typedef struct WsStore WsStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failure on this thread, or null. Free with
 [`ws_string_free`].
 */
char *ws_last_error(void);

/*
 # Safety
 `s` must come from this library and not have been freed.
 */
void ws_string_free(char *s);

/*
 Library version, statically allocated.
 */
const char *ws_version(void);

/*
 Opens (creating when missing) the store at `root`.

 # Safety
 `root` must be a NUL-terminated string; `out` must be writable.
 */
enum WsStatus ws_store_open(const char *root, struct WsStore **out);

/*
 # Safety
 `store` must come from [`ws_store_open`] and not have been freed.
 */
void ws_store_free(struct WsStore *store);

/*
 Number of stored tasks.

 # Safety
 `store` must be a live handle or null (which yields 0).
 */
uintptr_t ws_store_session_count(const struct WsStore *store);

/*
 Number of stored pieces.

 # Safety
 `store` must be a live handle or null (which yields 0).
 */
uintptr_t ws_store_piece_count(const struct WsStore *store);

/*
 Ingests one piece JSON document.

 # Safety
 `store` must be a live handle and `doc` a NUL-terminated string.
 */
enum WsStatus ws_ingest_piece(struct WsStore *store, const char *doc);

/*
 Ingests one task JSON document.

 # Safety
 `store` must be a live handle and `doc` a NUL-terminated string.
 */
enum WsStatus ws_ingest_session(struct WsStore *store, const char *doc);

/*
 Appends the default synthetic corpus for `seed`.

 # Safety
 `store` must be a live handle.
 */
enum WsStatus ws_simulate(struct WsStore *store, uint64_t seed);

/*
 Trains and registers a model from a JSON training request; writes the
 registry entry as JSON to `out_entry`.

 # Safety
 `store` must be a live handle, `request` a NUL-terminated string and
 `out_entry` writable.
 */
enum WsStatus ws_train(struct WsStore *store, const char *request, char **out_entry);

/*
 Loads a registered model by id.

 # Safety
 `store` must be a live handle, `model_id` a NUL-terminated string and
 `out` writable.
 */
enum WsStatus ws_model_load(const struct WsStore *store,
                            const char *model_id,
                            struct WsModel **out);

/*
 # Safety
 `model` must come from [`ws_model_load`] and not have been freed.
 */
void ws_model_free(struct WsModel *model);

/*
 Number of features the model expects.

 # Safety
 `model` must be a live handle or null (which yields 0).
 */
uintptr_t ws_model_feature_count(const struct WsModel *model);

/*
 Class probabilities `[P(expert), P(inexpert)]` for a raw feature row in
 the model's column order.

 # Safety
 `row` must point to `len` doubles and `out` to two writable doubles.
 */
enum WsStatus ws_model_predict_proba(const struct WsModel *model,
                                     const double *row,
                                     uintptr_t len,
                                     double *out);

/*
 Classifies a JSON record (see the HTTP `record` field) and writes the
 prediction as JSON.

 # Safety
 Handles must be live, `record` NUL-terminated and `out_json` writable.
 */
enum WsStatus ws_model_predict(const struct WsStore *store,
                               const struct WsModel *model,
                               const char *record,
                               char **out_json);

/*
 Explains a JSON record and writes the rendered report text.

 # Safety
 Handles must be live, `record` NUL-terminated and `out_report` writable.
 */
enum WsStatus ws_model_explain(const struct WsStore *store,
                               const struct WsModel *model,
                               const char *record,
                               uint64_t seed,
                               char **out_report);

/*
 KPI snapshot, baselines and verdicts for `worker` on `date`
 (`YYYY-MM-DD`), as JSON.

 # Safety
 `store` must be live, strings NUL-terminated and `out_json` writable.
 */
enum WsStatus ws_kpis(const struct WsStore *store,
                      const char *worker,
                      const char *date,
                      char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WORKSIGHT_H */
