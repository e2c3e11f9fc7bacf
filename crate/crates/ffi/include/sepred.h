#ifndef SEPRED_H
#define SEPRED_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum SepredStatus {
  SEPRED_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  SEPRED_STATUS_NULL_POINTER = 1,
  /**
   * An argument was out of range or an output buffer too small.
   */
  SEPRED_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Configuration or model-family problem.
   */
  SEPRED_STATUS_CONFIG = 3,
  /**
   * Unreadable, corrupt or mis-shaped data, including I/O failures.
   */
  SEPRED_STATUS_DATA = 4,
  /**
   * Ill-conditioned or non-finite numerics.
   */
  SEPRED_STATUS_NUMERIC = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  SEPRED_STATUS_PANIC = 6,
} SepredStatus;

typedef enum SepredScenario {
  SEPRED_SCENARIO_URBAN = 0,
  SEPRED_SCENARIO_RURAL = 1,
  SEPRED_SCENARIO_IID = 2,
} SepredScenario;

typedef enum SepredPrecoder {
  SEPRED_PRECODER_MRT = 0,
  SEPRED_PRECODER_ZF = 1,
} SepredPrecoder;

typedef enum SepredDetector {
  SEPRED_DETECTOR_MMSE = 0,
  SEPRED_DETECTOR_IRC = 1,
} SepredDetector;

typedef enum SepredScheme {
  SEPRED_SCHEME_DEFAULT = 0,
  SEPRED_SCHEME_SORTED = 1,
  /**
   * Elementary symmetric polynomials; the degree is passed separately.
   */
  SEPRED_SCHEME_POLY = 2,
} SepredScheme;

/**
 * One channel sample.
 */
typedef struct SepredChannel SepredChannel;

/**
 * A loaded channel dataset.
 */
typedef struct SepredDataset SepredDataset;

/**
 * A trained predictor of any family.
 */
typedef struct SepredModel SepredModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *sepred_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sepred_version(void);

/**
 * Draws sample `index` of a scenario with `users` users.
 *
 * # Safety
 * `out_channel` must be writable.
 */
enum SepredStatus sepred_channel_generate(enum SepredScenario scenario,
                                          uint64_t seed,
                                          size_t users,
                                          uint64_t index,
                                          struct SepredChannel **out_channel);

/**
 * Builds a channel from `users` matrices of shape `rx × tx`, stored
 * back-to-back in row-major order in `re` and `im`, each of length
 * `users * rx * tx`.
 *
 * # Safety
 * `re` and `im` must point to that many readable doubles; `out_channel`
 * must be writable.
 */
enum SepredStatus sepred_channel_from_parts(size_t users,
                                            size_t rx,
                                            size_t tx,
                                            size_t layers_per_user,
                                            double sigma2,
                                            const double *re,
                                            const double *im,
                                            struct SepredChannel **out_channel);

/**
 * Releases a channel handle; null is ignored.
 *
 * # Safety
 * `channel` must be null or a handle not yet freed.
 */
void sepred_channel_free(struct SepredChannel *channel);

/**
 * Writes the number of users, receive antennas, transmit antennas and
 * layers per user. Any out-pointer may be null.
 *
 * # Safety
 * `channel` must be a live handle; non-null out-pointers must be writable.
 */
enum SepredStatus sepred_channel_shape(const struct SepredChannel *channel,
                                       size_t *users,
                                       size_t *rx,
                                       size_t *tx,
                                       size_t *layers_per_user);

/**
 * Noise variance of the channel.
 *
 * # Safety
 * `channel` must be a live handle and `sigma2` writable.
 */
enum SepredStatus sepred_channel_sigma2(const struct SepredChannel *channel, double *sigma2);

/**
 * Ground-truth SE. Writes the average to `se_avg` and, when `se_user` is
 * non-null, one value per user; `se_user_len` must then be at least the
 * number of users.
 *
 * # Safety
 * `channel` must be a live handle; `se_avg` writable; `se_user` null or
 * writable for `se_user_len` doubles.
 */
enum SepredStatus sepred_spectral_efficiency(const struct SepredChannel *channel,
                                             enum SepredPrecoder precoder,
                                             enum SepredDetector detector,
                                             double *se_avg,
                                             double *se_user,
                                             size_t se_user_len);

/**
 * Single-user SINR proxy of the channel.
 *
 * # Safety
 * `channel` must be a live handle and `value` writable.
 */
enum SepredStatus sepred_susinr(const struct SepredChannel *channel, double *value);

/**
 * Average-SE feature vector. `poly_degree` is used only with
 * `SEPRED_SCHEME_POLY`. The required length is always written to
 * `written`; if `out_features` is null or `capacity` is too small the call
 * returns `SEPRED_STATUS_INVALID_ARGUMENT` without writing features.
 *
 * # Safety
 * `channel` must be a live handle, `written` writable and `out_features`
 * null or writable for `capacity` doubles.
 */
enum SepredStatus sepred_features(const struct SepredChannel *channel,
                                  enum SepredScheme scheme,
                                  size_t poly_degree,
                                  bool include_susinr,
                                  bool include_sigma2,
                                  double *out_features,
                                  size_t capacity,
                                  size_t *written);

/**
 * Loads a model file of any family.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out_model` writable.
 */
enum SepredStatus sepred_model_load(const char *path, struct SepredModel **out_model);

/**
 * Releases a model handle; null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void sepred_model_free(struct SepredModel *model);

/**
 * Number of input features the model expects.
 *
 * # Safety
 * `model` must be a live handle and `n` writable.
 */
enum SepredStatus sepred_model_n_features(const struct SepredModel *model, size_t *n);

/**
 * Predicts one row of `len` features.
 *
 * # Safety
 * `model` must be a live handle, `features` readable for `len` doubles and
 * `prediction` writable.
 */
enum SepredStatus sepred_model_predict(const struct SepredModel *model,
                                       const double *features,
                                       size_t len,
                                       double *prediction);

/**
 * Loads a channel dataset file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out_dataset` writable.
 */
enum SepredStatus sepred_dataset_load(const char *path, struct SepredDataset **out_dataset);

/**
 * Number of channels in the dataset.
 *
 * # Safety
 * `dataset` must be a live handle and `len` writable.
 */
enum SepredStatus sepred_dataset_len(const struct SepredDataset *dataset, size_t *len);

/**
 * Copies channel `index` into a new handle owned by the caller.
 *
 * # Safety
 * `dataset` must be a live handle and `out_channel` writable.
 */
enum SepredStatus sepred_dataset_get(const struct SepredDataset *dataset,
                                     size_t index,
                                     struct SepredChannel **out_channel);

/**
 * Releases a dataset handle; null is ignored.
 *
 * # Safety
 * `dataset` must be null or a handle not yet freed.
 */
void sepred_dataset_free(struct SepredDataset *dataset);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEPRED_H */
