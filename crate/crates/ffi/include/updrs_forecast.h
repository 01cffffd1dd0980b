#ifndef UPDRS_FORECAST_H
#define UPDRS_FORECAST_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum UfStatus {
  UF_STATUS_OK = 0,
  /**
   * Null pointer, bad argument or invalid configuration.
   */
  UF_STATUS_USAGE = 1,
  /**
   * Missing or malformed data, I/O failure.
   */
  UF_STATUS_DATA = 2,
  /**
   * Non-finite loss, shape mismatch or a failed gradient check.
   */
  UF_STATUS_NUMERICAL = 3,
  /**
   * A Rust panic was caught at the boundary.
   */
  UF_STATUS_PANIC = 4,
} UfStatus;

/**
 * Values accepted by the `kind` argument of [`uf_model_train`].
 */
typedef enum UfModelKind {
  UF_MODEL_KIND_LSTM = 0,
  UF_MODEL_KIND_KAN = 1,
} UfModelKind;

typedef struct UfCohort UfCohort;

typedef struct UfModel UfModel;

typedef struct UfTrainOptions {
  double lr;
  double weight_decay;
  size_t max_epochs;
  size_t patience;
  size_t batch_size;
  uint64_t seed;
} UfTrainOptions;

typedef struct UfMetrics {
  double smape;
  double mse;
  double rmse;
} UfMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *uf_version(void);

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next call into the library on this thread.
 */
const char *uf_last_error(void);

/**
 * Synthetic cohort with default settings, `n_patients` patients.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum UfStatus uf_cohort_generate(size_t n_patients, uint64_t seed, struct UfCohort **out);

/**
 * Reads the four cohort CSVs from `dir`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string; `out` as for [`uf_cohort_generate`].
 */
enum UfStatus uf_cohort_load(const char *dir, struct UfCohort **out);

/**
 * Writes the four cohort CSVs into `dir`, creating it if needed.
 *
 * # Safety
 * `cohort` must be a live handle and `dir` a NUL-terminated string.
 */
enum UfStatus uf_cohort_write(const struct UfCohort *cohort, const char *dir);

/**
 * Distinct patients across the clinical and supplemental tables.
 *
 * # Safety
 * `cohort` must be a live handle and `out` writable.
 */
enum UfStatus uf_cohort_patient_count(const struct UfCohort *cohort, size_t *out);

/**
 * # Safety
 * `cohort` must be null or a handle not yet freed.
 */
void uf_cohort_free(struct UfCohort *cohort);

/**
 * Default training options for a model kind.
 *
 * # Safety
 * `out` must be writable.
 */
enum UfStatus uf_train_options_default(uint32_t kind, struct UfTrainOptions *out);

/**
 * Splits `cohort` by patient, trains a model of `kind` with the default
 * architecture and evaluates it on the validation patients.
 *
 * # Safety
 * `cohort` must be a live handle; `options` null (defaults) or valid;
 * `out` writable.
 */
enum UfStatus uf_model_train(const struct UfCohort *cohort,
                             uint32_t kind,
                             const struct UfTrainOptions *options,
                             struct UfModel **out);

/**
 * Validation metrics of a trained model: `target` 0–3 for UPDRS parts 1–4,
 * 4 for the average.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum UfStatus uf_model_metrics(const struct UfModel *model, size_t target, struct UfMetrics *out);

/**
 * Width of one flat feature row accepted by [`uf_model_predict`].
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum UfStatus uf_model_input_width(const struct UfModel *model, size_t *out);

/**
 * Trainable parameter count.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum UfStatus uf_model_param_count(const struct UfModel *model, size_t *out);

/**
 * Predicts UPDRS parts 1–4 in score units for `rows` preprocessed feature
 * rows of `cols` values each (row-major). Writes `rows * 4` values.
 *
 * # Safety
 * `inputs` must hold `rows * cols` values and `out` room for `out_len`.
 */
enum UfStatus uf_model_predict(const struct UfModel *model,
                               const double *inputs,
                               size_t rows,
                               size_t cols,
                               double *out,
                               size_t out_len);

/**
 * Writes the model and its preprocessing state into `dir`.
 *
 * # Safety
 * `model` must be a live handle and `dir` a NUL-terminated string.
 */
enum UfStatus uf_model_save(const struct UfModel *model, const char *dir);

/**
 * Loads a model directory written by [`uf_model_save`] or the CLI.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` writable.
 */
enum UfStatus uf_model_load(const char *dir, struct UfModel **out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void uf_model_free(struct UfModel *model);

/**
 * SMAPE in percent over `n` pairs.
 *
 * # Safety
 * Both arrays must hold `n` values; `out` must be writable.
 */
enum UfStatus uf_smape(const double *actual, const double *predicted, size_t n, double *out);

/**
 * # Safety
 * As for [`uf_smape`].
 */
enum UfStatus uf_mse(const double *actual, const double *predicted, size_t n, double *out);

/**
 * # Safety
 * As for [`uf_smape`].
 */
enum UfStatus uf_rmse(const double *actual, const double *predicted, size_t n, double *out);

/**
 * Runs the gradient-check suite with step `eps`; `all_pass` receives 1 when
 * every layer family passes.
 *
 * # Safety
 * `all_pass` must be writable.
 */
enum UfStatus uf_gradcheck(double eps, int32_t *all_pass);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UPDRS_FORECAST_H */
