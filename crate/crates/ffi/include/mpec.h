#ifndef MPEC_H
#define MPEC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result of every fallible call. The three error categories share their
 * numeric values with the command-line exit codes.
 */
typedef enum MpecStatus {
  MPEC_STATUS_OK = 0,
  /**
   * Invalid configuration or parameter value.
   */
  MPEC_STATUS_CONFIG = 2,
  /**
   * Malformed, inconsistent or unreadable input data.
   */
  MPEC_STATUS_DATA = 3,
  /**
   * A numerical routine failed (for example a matrix lost definiteness).
   */
  MPEC_STATUS_NUMERICAL = 4,
  /**
   * A required pointer argument was null.
   */
  MPEC_STATUS_NULL_POINTER = 10,
  /**
   * A string was not valid UTF-8 or a length did not match.
   */
  MPEC_STATUS_INVALID_ARGUMENT = 11,
  /**
   * The library panicked; the handles passed in should be freed and not
   * used again.
   */
  MPEC_STATUS_PANIC = 12,
} MpecStatus;

/**
 * A fitted classification pipeline.
 */
typedef struct MpecModel MpecModel;

/**
 * A list of labelled multichannel trials.
 */
typedef struct MpecTrials MpecTrials;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on the calling thread, or an empty
 * string. The pointer stays valid until the next failing call on the same
 * thread.
 */
const char *mpec_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mpec_version(void);

/**
 * Reads trials from a binary archive, or from a JSON manifest of CSV files
 * when the path ends in `.json`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum MpecStatus mpec_trials_read(const char *path, struct MpecTrials **out);

/**
 * Decodes trials from an in-memory binary archive.
 *
 * # Safety
 * `bytes` must point to `len` readable bytes and `out` must be writable.
 */
enum MpecStatus mpec_trials_from_buffer(const uint8_t *bytes, size_t len, struct MpecTrials **out);

/**
 * Builds trials from a dense array laid out trial by trial, each trial
 * channel-major: `data[(i * channels + c) * samples + t]`.
 *
 * # Safety
 * `data` must hold `n_trials * channels * samples` doubles, `labels` must
 * hold `n_trials` entries and `out` must be writable.
 */
enum MpecStatus mpec_trials_from_arrays(const double *data,
                                        const uint32_t *labels,
                                        size_t n_trials,
                                        size_t channels,
                                        size_t samples,
                                        struct MpecTrials **out);

/**
 * Number of trials in the handle, or 0 for a null handle.
 *
 * # Safety
 * `trials` must be null or a live handle.
 */
size_t mpec_trials_len(const struct MpecTrials *trials);

/**
 * Releases a trials handle. Null is ignored.
 *
 * # Safety
 * `trials` must be null or a handle not yet freed.
 */
void mpec_trials_free(struct MpecTrials *trials);

/**
 * Fits the full pipeline on every trial in the handle. `config_json` uses
 * the command-line configuration schema and may be null for the defaults;
 * `seed` overrides its seed.
 *
 * # Safety
 * `trials` must be a live handle, `config_json` null or a NUL-terminated
 * string, and `out` writable.
 */
enum MpecStatus mpec_model_fit(const struct MpecTrials *trials,
                               const char *config_json,
                               uint64_t seed,
                               struct MpecModel **out);

/**
 * Writes one predicted class per trial into `out_classes`, whose length
 * `len` must equal the number of trials.
 *
 * # Safety
 * `model` and `trials` must be live handles and `out_classes` must hold
 * `len` writable entries.
 */
enum MpecStatus mpec_model_predict(const struct MpecModel *model,
                                   const struct MpecTrials *trials,
                                   uint32_t *out_classes,
                                   size_t len);

/**
 * Number of classes the model distinguishes, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t mpec_model_class_count(const struct MpecModel *model);

/**
 * Saves a model file.
 *
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum MpecStatus mpec_model_save(const struct MpecModel *model, const char *path);

/**
 * Loads a model file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum MpecStatus mpec_model_load(const char *path, struct MpecModel **out);

/**
 * Releases a model handle. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void mpec_model_free(struct MpecModel *model);

/**
 * Affine-invariant geodesic distance between two symmetric positive
 * definite `n × n` matrices given in row-major order.
 *
 * # Safety
 * `a` and `b` must each hold `n * n` doubles and `out` must be writable.
 */
enum MpecStatus mpec_airm_distance(const double *a, const double *b, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MPEC_H */
