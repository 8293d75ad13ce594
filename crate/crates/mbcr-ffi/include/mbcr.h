/* C interface to the mbcr Bayesian convex regression library. */

#ifndef MBCR_H
#define MBCR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code for every fallible call.
 */
typedef enum MbcrStatus {
  /**
   * Success.
   */
  MBCR_STATUS_OK = 0,
  /**
   * A required pointer was null.
   */
  MBCR_STATUS_NULL_ARGUMENT = 1,
  /**
   * Sizes, bounds, or configuration were rejected.
   */
  MBCR_STATUS_INVALID_INPUT = 2,
  /**
   * The sampler or a solver failed at runtime.
   */
  MBCR_STATUS_RUNTIME_ERROR = 3,
} MbcrStatus;

/**
 * Fitted posterior: an opaque handle created by `mbcr_fit` and released by
 * `mbcr_model_free`.
 */
typedef struct MbcrModel MbcrModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message for this thread, NUL-terminated. The pointer stays
 * valid until the next failing call on the same thread. Never null.
 */
const char *mbcr_last_error(void);

/**
 * Fits the posterior to `n` observations of dimension `p`.
 *
 * `x` is row-major `n × p`, `y` has length `n`. `lambda` is the prior mean
 * piece count (must be positive); the remaining hyperparameters use the
 * library's stock settings. On success `*out` owns the fitted model.
 *
 * # Safety
 * `x` and `y` must point to `n * p` and `n` readable doubles, and `out`
 * must be writable.
 */
enum MbcrStatus mbcr_fit(const double *x,
                         const double *y,
                         uintptr_t n,
                         uintptr_t p,
                         double lambda,
                         uintptr_t iterations,
                         uintptr_t burn_in,
                         uintptr_t thin,
                         uint64_t seed,
                         struct MbcrModel **out);

/**
 * Releases a model created by `mbcr_fit`. A null `model` is a no-op.
 *
 * # Safety
 * `model` must be a pointer returned by `mbcr_fit` that has not been freed.
 */
void mbcr_model_free(struct MbcrModel *model);

/**
 * Covariate dimension of a fitted model; 0 if `model` is null.
 *
 * # Safety
 * `model` must be null or a live pointer from `mbcr_fit`.
 */
uintptr_t mbcr_model_dim(const struct MbcrModel *model);

/**
 * Number of retained posterior draws; 0 if `model` is null.
 *
 * # Safety
 * `model` must be null or a live pointer from `mbcr_fit`.
 */
uintptr_t mbcr_model_draw_count(const struct MbcrModel *model);

/**
 * Posterior-mean prediction at a point of the model's dimension.
 *
 * # Safety
 * `x` must point to `mbcr_model_dim(model)` readable doubles and `out`
 * must be writable.
 */
enum MbcrStatus mbcr_predict_mean(const struct MbcrModel *model, const double *x, double *out);

/**
 * Central credible band at a point; `level` is the band mass in (0, 1).
 *
 * # Safety
 * `x` must point to `mbcr_model_dim(model)` readable doubles; `out_lo` and
 * `out_hi` must be writable.
 */
enum MbcrStatus mbcr_predict_band(const struct MbcrModel *model,
                                  const double *x,
                                  double level,
                                  double *out_lo,
                                  double *out_hi);

/**
 * Minimizes the model's surrogate over the box `[lower, upper]`, writing
 * the minimizer to `out_x` and its value to `out_value`. At most 100
 * evenly spaced draws enter the surrogate.
 *
 * # Safety
 * `lower`, `upper`, and `out_x` must point to `mbcr_model_dim(model)`
 * doubles (the first two readable, `out_x` writable); `out_value` must be
 * writable.
 */
enum MbcrStatus mbcr_minimize(const struct MbcrModel *model,
                              const double *lower,
                              const double *upper,
                              double *out_x,
                              double *out_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MBCR_H */
