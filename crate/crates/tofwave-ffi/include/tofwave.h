#ifndef TOFWAVE_H
#define TOFWAVE_H

/* Generated by cbindgen from tofwave-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible entry point.
 */
typedef enum TofStatus {
  TOF_STATUS_OK = 0,
  /**
   * a required pointer argument was NULL
   */
  TOF_STATUS_NULL_ARGUMENT = 1,
  /**
   * arguments outside the supported domain (see `tof_last_error`)
   */
  TOF_STATUS_INVALID_INPUT = 2,
  /**
   * the numerical solve did not converge (see `tof_last_error`)
   */
  TOF_STATUS_SOLVE_FAILED = 3,
  /**
   * an internal invariant broke; the handle state is unspecified
   */
  TOF_STATUS_PANICKED = 4,
} TofStatus;

/**
 * Model coefficients together with the solved homogeneous rest state.
 */
typedef struct TofModel TofModel;

/**
 * A solved traveling front on its grid.
 */
typedef struct TofProfile TofProfile;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static name of a status code; never NULL, do not free.
 */
const char *tof_status_name(enum TofStatus status);

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `cap`). Returns the size the full message
 * needs, including the terminator; call again with a larger buffer if
 * the return value exceeds `cap`.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes, or be NULL to query the size.
 */
size_t tof_last_error(char *buf, size_t cap);

/**
 * Creates the shipped default coefficient set with its rest state.
 *
 * # Safety
 * `out` must be a valid pointer; the handle must be released with
 * `tof_model_free`.
 */
enum TofStatus tof_model_default(struct TofModel **out);

/**
 * Creates a model from quintic coefficients alpha, beta0, beta2, beta4
 * (real and imaginary parts) and solves its rest state.
 *
 * # Safety
 * `out` must be a valid pointer; the handle must be released with
 * `tof_model_free`.
 */
enum TofStatus tof_model_quintic(double alpha_re,
                                 double alpha_im,
                                 double beta0_re,
                                 double beta0_im,
                                 double beta2_re,
                                 double beta2_im,
                                 double beta4_re,
                                 double beta4_im,
                                 struct TofModel **out);

/**
 * Releases a model handle; NULL is a no-op.
 *
 * # Safety
 * `model` must have come from a `tof_model_*` constructor and not been
 * freed before.
 */
void tof_model_free(struct TofModel *model);

/**
 * Copies the rest-state invariants: squared modulus, rotation frequency
 * and the two linearization slopes. Any output pointer may be NULL to
 * skip that value.
 *
 * # Safety
 * `model` must be a live handle; non-NULL outputs must be writable.
 */
enum TofStatus tof_model_rest_state(const struct TofModel *model,
                                    double *r_inf,
                                    double *omega,
                                    double *sigma1,
                                    double *sigma2);

/**
 * Writes whether the model satisfies the standing sign conditions
 * (diffusion, rest-state damping, combined damping).
 *
 * # Safety
 * `model` must be a live handle and `pass` writable.
 */
enum TofStatus tof_model_assumptions_pass(const struct TofModel *model, bool *pass);

/**
 * Solves the traveling front on [-half_width, half_width] with n grid
 * points. The returned handle owns the profile.
 *
 * # Safety
 * `model` must be a live handle and `out` valid; release the result with
 * `tof_profile_free`.
 */
enum TofStatus tof_profile_solve(const struct TofModel *model,
                                 double half_width,
                                 size_t n,
                                 struct TofProfile **out);

/**
 * Releases a profile handle; NULL is a no-op.
 *
 * # Safety
 * `profile` must have come from `tof_profile_solve` and not been freed
 * before.
 */
void tof_profile_free(struct TofProfile *profile);

/**
 * Copies the solved front's scalars: speed, frame rotation frequency,
 * final Newton residual, and the fitted tail decay rates (NaN when a tail
 * could not be resolved). Any output pointer may be NULL to skip.
 *
 * # Safety
 * `profile` must be a live handle; non-NULL outputs must be writable.
 */
enum TofStatus tof_profile_scalars(const struct TofProfile *profile,
                                   double *speed,
                                   double *omega,
                                   double *residual,
                                   double *left_rate,
                                   double *right_rate);

/**
 * Writes the grid extent and point count of a solved profile.
 *
 * # Safety
 * `profile` must be a live handle; non-NULL outputs must be writable.
 */
enum TofStatus tof_profile_grid(const struct TofProfile *profile, double *half_width, size_t *n);

/**
 * Copies the front's two field components into caller arrays of length
 * `len`, which must equal the grid point count.
 *
 * # Safety
 * `profile` must be a live handle; `re` and `im` must each point to `len`
 * writable doubles.
 */
enum TofStatus tof_profile_values(const struct TofProfile *profile,
                                  double *re,
                                  double *im,
                                  size_t len);

/**
 * Measures how well the profile derivative spans the kernel of the
 * linearization: the relative L2 residual of applying the operator to it.
 *
 * # Safety
 * `profile` and `model` must be live handles built from the same
 * coefficients; `out` must be writable.
 */
enum TofStatus tof_profile_kernel_residual(const struct TofProfile *profile,
                                           const struct TofModel *model,
                                           double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TOFWAVE_H */
