#ifndef CWSL_H
#define CWSL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CwslStatus {
  CWSL_STATUS_OK = 0,
  CWSL_STATUS_NULL_POINTER = 1,
  CWSL_STATUS_INVALID_UTF8 = 2,
  /**
   * Bad input: schema, validation or an unusable request.
   */
  CWSL_STATUS_INPUT = 3,
  /**
   * A numerical stage failed.
   */
  CWSL_STATUS_SOLVER = 4,
  CWSL_STATUS_OUT_OF_RANGE = 5,
  CWSL_STATUS_PANIC = 6,
} CwslStatus;

typedef struct CwslProblem CwslProblem;

typedef struct CwslReconstruction CwslReconstruction;

typedef struct CwslSpectrum CwslSpectrum;

/**
 * One eigenvalue with its Weyl coefficient.
 */
typedef struct CwslEigenvalue {
  size_t k;
  uint8_t branch;
  double lambda_re;
  double lambda_im;
  double m_re;
  double m_im;
} CwslEigenvalue;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *cwsl_last_error(void);

/**
 * Frees a string returned by a `*_to_json` call.
 *
 * # Safety
 * `s` is null or came from this library and was not freed before.
 */
void cwsl_string_free(char *s);

/**
 * Parses a problem document (the `forward --input` format) and validates it.
 *
 * # Safety
 * `json` is a NUL-terminated string; `out` is writable.
 */
enum CwslStatus cwsl_problem_from_json(const char *json, struct CwslProblem **out);

/**
 * # Safety
 * `p` is null or a live handle from `cwsl_problem_from_json`.
 */
void cwsl_problem_free(struct CwslProblem *p);

/**
 * Computes `n` eigenvalues per branch with default solver settings, plus
 * `weyl_samples` Weyl function samples for constant recovery (strict mode).
 *
 * # Safety
 * `problem` is a live handle; `out` is writable.
 */
enum CwslStatus cwsl_forward(const struct CwslProblem *problem,
                             size_t n,
                             size_t weyl_samples,
                             struct CwslSpectrum **out);

/**
 * Parses a spectrum document (the `forward --output` format).
 *
 * # Safety
 * `json` is a NUL-terminated string; `out` is writable.
 */
enum CwslStatus cwsl_spectrum_from_json(const char *json, struct CwslSpectrum **out);

/**
 * # Safety
 * `s` is a live handle; `out` is writable. Free the result with `cwsl_string_free`.
 */
enum CwslStatus cwsl_spectrum_to_json(const struct CwslSpectrum *s, char **out);

/**
 * Number of eigenvalues held, or 0 for a null handle.
 *
 * # Safety
 * `s` is null or a live handle.
 */
size_t cwsl_spectrum_len(const struct CwslSpectrum *s);

/**
 * Entry `index`, ordered by branch then `k`.
 *
 * # Safety
 * `s` is a live handle; `out` is writable.
 */
enum CwslStatus cwsl_spectrum_get(const struct CwslSpectrum *s,
                                  size_t index,
                                  struct CwslEigenvalue *out);

/**
 * # Safety
 * `s` is null or a live spectrum handle.
 */
void cwsl_spectrum_free(struct CwslSpectrum *s);

/**
 * Reconstructs the potential and boundary data from a strict-mode spectrum.
 * `truncation` and `x_grid` of 0 keep the defaults. With `known` non-null its
 * interface, coefficients and jump are used instead of recovering them.
 *
 * # Safety
 * `spectrum` is a live handle, `known` is null or a live handle, `out` is writable.
 */
enum CwslStatus cwsl_invert(const struct CwslSpectrum *spectrum,
                            size_t truncation,
                            size_t x_grid,
                            const struct CwslProblem *known,
                            struct CwslReconstruction **out);

/**
 * Number of grid points in the reconstructed potential.
 *
 * # Safety
 * `r` is null or a live handle.
 */
size_t cwsl_reconstruction_len(const struct CwslReconstruction *r);

/**
 * Grid point `index` of the reconstructed potential.
 *
 * # Safety
 * `r` is a live handle; `x`, `q_re`, `q_im` are writable.
 */
enum CwslStatus cwsl_reconstruction_q(const struct CwslReconstruction *r,
                                      size_t index,
                                      double *x,
                                      double *q_re,
                                      double *q_im);

/**
 * The reconstruction document (the `invert --output` format).
 *
 * # Safety
 * `r` is a live handle; `out` is writable. Free the result with `cwsl_string_free`.
 */
enum CwslStatus cwsl_reconstruction_to_json(const struct CwslReconstruction *r, char **out);

/**
 * # Safety
 * `r` is null or a live reconstruction handle.
 */
void cwsl_reconstruction_free(struct CwslReconstruction *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CWSL_H */
