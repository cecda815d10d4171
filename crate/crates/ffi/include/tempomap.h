/* C ABI for the tempomap library. Handles are opaque; every fallible call returns a TempomapStatus and stores a message retrievable via tempomap_last_error_message(). */

#ifndef TEMPOMAP_H
#define TEMPOMAP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of the C API.
 */
typedef enum TempomapStatus {
  TEMPOMAP_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  TEMPOMAP_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  TEMPOMAP_STATUS_INVALID_UTF8 = 2,
  /**
   * Invalid configuration or parameters.
   */
  TEMPOMAP_STATUS_CONFIG_ERROR = 3,
  /**
   * Malformed or inconsistent data.
   */
  TEMPOMAP_STATUS_DATA_ERROR = 4,
  /**
   * Numerical failure during training or inference.
   */
  TEMPOMAP_STATUS_NUMERICAL_ERROR = 5,
  /**
   * File system failure.
   */
  TEMPOMAP_STATUS_IO_ERROR = 6,
  /**
   * A panic was caught at the FFI boundary.
   */
  TEMPOMAP_STATUS_INTERNAL_ERROR = 7,
} TempomapStatus;

/**
 * Opaque dataset handle.
 */
typedef struct TempomapDataset TempomapDataset;

/**
 * Opaque trained-model handle.
 */
typedef struct TempomapModel TempomapModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message of the calling thread, or null when no error was
 * recorded. The caller owns the returned string and must release it with
 * `tempomap_string_free`.
 */
char *tempomap_last_error_message(void);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must be null or a pointer previously returned by a `tempomap_*`
 * function, not yet freed.
 */
void tempomap_string_free(char *s);

/**
 * Load a long-format CSV dataset (`sample_id,time_index,label,<features>`)
 * and store a new dataset handle in `out`.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string; `out` must be a valid
 * pointer.
 */
enum TempomapStatus tempomap_dataset_load_csv(const char *path, struct TempomapDataset **out);

/**
 * Generate a synthetic two-class dataset (see the library documentation
 * for the generator) and store a new dataset handle in `out`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum TempomapStatus tempomap_dataset_simulate(size_t n_per_class,
                                              size_t timepoints,
                                              size_t features,
                                              size_t d_informative,
                                              uint64_t seed,
                                              struct TempomapDataset **out);

/**
 * Number of samples in a dataset (0 for a null handle).
 */
size_t tempomap_dataset_num_samples(const struct TempomapDataset *dataset);

/**
 * Number of time points per sequence (0 for a null handle).
 */
size_t tempomap_dataset_num_timepoints(const struct TempomapDataset *dataset);

/**
 * Number of features (0 for a null handle).
 */
size_t tempomap_dataset_num_features(const struct TempomapDataset *dataset);

/**
 * Release a dataset handle.
 *
 * # Safety
 * `dataset` must be null or a handle returned by this library, not yet
 * freed.
 */
void tempomap_dataset_free(struct TempomapDataset *dataset);

/**
 * Train a supervised model on a dataset. `config_json` may be null for the
 * default configuration or hold a JSON training configuration. The SVM
 * stage is fitted automatically when at least two labels are present.
 *
 * # Safety
 * `dataset` must be a valid dataset handle; `config_json` null or a valid
 * NUL-terminated string; `out` a valid pointer.
 */
enum TempomapStatus tempomap_train(const struct TempomapDataset *dataset,
                                   const char *config_json,
                                   struct TempomapModel **out);

/**
 * Load a model bundle from a JSON file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string; `out` a valid pointer.
 */
enum TempomapStatus tempomap_model_load(const char *path, struct TempomapModel **out);

/**
 * Write a model bundle to a JSON file.
 *
 * # Safety
 * `model` must be a valid model handle; `path` a valid NUL-terminated
 * string.
 */
enum TempomapStatus tempomap_model_save(const struct TempomapModel *model, const char *path);

/**
 * Number of class labels (0 for a null handle).
 */
size_t tempomap_model_num_labels(const struct TempomapModel *model);

/**
 * Number of input features (0 for a null handle).
 */
size_t tempomap_model_num_features(const struct TempomapModel *model);

/**
 * Name of the label at `index`, or null when out of range. The caller owns
 * the returned string.
 *
 * # Safety
 * `model` must be null or a valid model handle.
 */
char *tempomap_model_label_name(const struct TempomapModel *model, size_t index);

/**
 * Classify one sequence (`values`: row-major `timepoints x features`).
 * Writes the predicted label index into `out_label_index`; when the model
 * carries an SVM stage `out_decision` (nullable) receives its decision
 * value, otherwise NaN.
 *
 * # Safety
 * `model` must be a valid model handle, `values` point to
 * `timepoints * features` doubles, `out_label_index` be a valid pointer,
 * `out_decision` null or valid.
 */
enum TempomapStatus tempomap_predict(const struct TempomapModel *model,
                                     const double *values,
                                     size_t timepoints,
                                     size_t features,
                                     size_t *out_label_index,
                                     double *out_decision);

/**
 * Per-class sequence log-likelihoods; `out_logliks` must hold
 * `tempomap_model_num_labels` doubles.
 *
 * # Safety
 * As for `tempomap_predict`; `out_logliks` must point to enough space.
 */
enum TempomapStatus tempomap_loglik(const struct TempomapModel *model,
                                    const double *values,
                                    size_t timepoints,
                                    size_t features,
                                    double *out_logliks);

/**
 * Per-feature relevance values of the learned metric; `out_relevance` must
 * hold `tempomap_model_num_features` doubles.
 *
 * # Safety
 * `model` must be a valid model handle; `out_relevance` must point to
 * enough space.
 */
enum TempomapStatus tempomap_relevance(const struct TempomapModel *model, double *out_relevance);

/**
 * Release a model handle.
 *
 * # Safety
 * `model` must be null or a handle returned by this library, not yet
 * freed.
 */
void tempomap_model_free(struct TempomapModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TEMPOMAP_H */
