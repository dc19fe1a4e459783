#ifndef IGMN_H
#define IGMN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IgmnRepresentation {
  /**
   * Covariance matrices with dense inversion (reference learner).
   */
  IGMN_REPRESENTATION_COVARIANCE = 0,
  /**
   * Precision matrices with rank-one updates (fast learner).
   */
  IGMN_REPRESENTATION_PRECISION = 1,
} IgmnRepresentation;

/**
 * Status codes returned by every function.
 */
typedef enum IgmnStatus {
  IGMN_STATUS_OK = 0,
  IGMN_STATUS_NULL_POINTER = 1,
  IGMN_STATUS_INVALID_ARGUMENT = 2,
  IGMN_STATUS_DIMENSION_MISMATCH = 3,
  IGMN_STATUS_NUMERICAL = 4,
  IGMN_STATUS_IO = 5,
  IGMN_STATUS_FORMAT = 6,
  IGMN_STATUS_PANIC = 7,
} IgmnStatus;

/**
 * Opaque model handle.
 */
typedef struct IgmnModel IgmnModel;

/**
 * Learner hyperparameters. Fill with [`igmn_config_default`] first.
 */
typedef struct IgmnConfig {
  double delta;
  double beta;
  uint64_t v_min;
  double sp_min;
  /**
   * Nonzero enables pruning of spurious components.
   */
  int32_t pruning;
  enum IgmnRepresentation representation;
} IgmnConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *igmn_last_error(void);

/**
 * Writes the library defaults: delta 0.5, the smallest positive beta,
 * v_min 5, sp_min 3, pruning on, precision representation.
 *
 * # Safety
 *
 * `out` must be null or point to writable memory for one `IgmnConfig`.
 */
enum IgmnStatus igmn_config_default(struct IgmnConfig *out);

/**
 * Creates an empty model of dimension `dim`. `dataset_std` holds the
 * per-dimension spread used to size new components.
 *
 * # Safety
 *
 * `dataset_std` must be null or valid for `dim` reads; `out` must be null or writable.
 */
enum IgmnStatus igmn_model_new(const struct IgmnConfig *config,
                               const double *dataset_std,
                               size_t dim,
                               struct IgmnModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 *
 * `model` must be null or a live handle from this library, not used afterwards.
 */
void igmn_model_free(struct IgmnModel *model);

/**
 * Learns one data point of length `dim`.
 *
 * # Safety
 *
 * `model` must be a live handle; `x` must be valid for `len` reads.
 */
enum IgmnStatus igmn_model_learn(struct IgmnModel *model, const double *x, size_t len);

/**
 * Learns `rows` points stored row-major, each of length `dim`.
 *
 * # Safety
 *
 * `model` must be a live handle; `data` must be valid for `rows * dim` reads.
 */
enum IgmnStatus igmn_model_learn_batch(struct IgmnModel *model,
                                       const double *data,
                                       size_t rows,
                                       size_t dim);

/**
 * Predicts the dimensions listed in `targets` from the remaining ones.
 *
 * `known` holds the non-target values in increasing dimension order.
 * `out_mean` receives `n_targets` values; `out_cov`, if not null, receives
 * the `n_targets * n_targets` mixture covariance, row-major.
 *
 * # Safety
 *
 * `model` must be a live handle and every buffer valid for the lengths given above.
 */
enum IgmnStatus igmn_model_predict(const struct IgmnModel *model,
                                   const size_t *targets,
                                   size_t n_targets,
                                   const double *known,
                                   size_t n_known,
                                   double *out_mean,
                                   double *out_cov);

/**
 * Number of components currently in the model.
 *
 * # Safety
 *
 * `model` must be a live handle; `out` must be null or writable.
 */
enum IgmnStatus igmn_model_component_count(const struct IgmnModel *model, size_t *out);

/**
 * Dimension of the model.
 *
 * # Safety
 *
 * `model` must be a live handle; `out` must be null or writable.
 */
enum IgmnStatus igmn_model_dim(const struct IgmnModel *model, size_t *out);

/**
 * Writes the model in the text format read by [`igmn_model_load`] and the
 * command-line tool.
 *
 * # Safety
 *
 * `model` must be a live handle; `path` must be a NUL-terminated string.
 */
enum IgmnStatus igmn_model_save(const struct IgmnModel *model, const char *path);

/**
 * Reads a model written by [`igmn_model_save`] or the command-line tool.
 *
 * # Safety
 *
 * `path` must be a NUL-terminated string; `out` must be null or writable.
 */
enum IgmnStatus igmn_model_load(const char *path, struct IgmnModel **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IGMN_H */
