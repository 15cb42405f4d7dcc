#ifndef CUSPLAB_H
#define CUSPLAB_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. `0` is success.
 */
typedef enum CusplabStatus {
  CUSPLAB_STATUS_OK = 0,
  CUSPLAB_STATUS_INVALID_INPUT = 1,
  CUSPLAB_STATUS_DOMAIN = 2,
  CUSPLAB_STATUS_NOT_HYPERBOLIC = 3,
  CUSPLAB_STATUS_NO_CONVERGENCE = 4,
  CUSPLAB_STATUS_NOT_POSITIVE_DEFINITE = 5,
  CUSPLAB_STATUS_QUADRATURE = 6,
  CUSPLAB_STATUS_IO = 7,
  CUSPLAB_STATUS_NULL_POINTER = 8,
  CUSPLAB_STATUS_PANIC = 9,
} CusplabStatus;

/**
 * Opaque surface handle.
 */
typedef struct CusplabSurface CusplabSurface;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *cusplab_last_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *cusplab_version(void);

/**
 * Build a preset surface (`"one-cusp-genus-1"`, `"thrice-punctured"`,
 * `"modular-pair"`). A non-positive `cusp_height` selects the default.
 *
 * # Safety
 * `name` must be a nul-terminated string and `out` writable.
 */
enum CusplabStatus cusplab_surface_preset(const char *name,
                                          double cusp_height,
                                          struct CusplabSurface **out_surface);

/**
 * Build a surface from `n` generators stored row-major as `[a, b, c, d]`
 * quadruples (`4n` doubles); generators are named a, b, c, …
 *
 * # Safety
 * `matrices` must point to `4n` doubles and `out` must be writable.
 */
enum CusplabStatus cusplab_surface_from_generators(const double *matrices,
                                                   size_t n,
                                                   double cusp_height,
                                                   struct CusplabSurface **out_surface);

/**
 * Release a surface. Null is ignored.
 *
 * # Safety
 * `s` must come from a constructor above and not be used afterwards.
 */
void cusplab_surface_free(struct CusplabSurface *s);

/**
 * Cusp width of the surface.
 *
 * # Safety
 * Pointers must be valid.
 */
enum CusplabStatus cusplab_surface_width(const struct CusplabSurface *s, double *out_width);

/**
 * Translation length `2 arccosh(|tr|/2)` of the class of `word`.
 *
 * # Safety
 * Pointers must be valid; `word` nul-terminated.
 */
enum CusplabStatus cusplab_trace_length(const struct CusplabSurface *s,
                                        const char *word,
                                        double *out_length);

/**
 * Length of the closed hyperbolic geodesic in the class, found by the
 * variational finder (default options).
 *
 * # Safety
 * Pointers must be valid; `word` nul-terminated.
 */
enum CusplabStatus cusplab_geodesic_length(const struct CusplabSurface *s,
                                           const char *word,
                                           double *out_length);

/**
 * `H(ρ) = √π Γ(ρ/2)/Γ((ρ+1)/2)` for `Re ρ > 0`.
 *
 * # Safety
 * Out-pointers must be valid.
 */
enum CusplabStatus cusplab_h_closed(double re, double im, double *out_re, double *out_im);

/**
 * Closed form of the Π₂ indicial pairing in dimension `d` at ρ for the
 * probe with coefficient `a` and symmetric `c0` (`d·d` doubles, row-major;
 * null means zero).
 *
 * # Safety
 * `c0` must be null or point to `d·d` doubles; out-pointers valid.
 */
enum CusplabStatus cusplab_pi2_form(size_t d,
                                    double re,
                                    double im,
                                    double a,
                                    const double *c0,
                                    double *out_re,
                                    double *out_im);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CUSPLAB_H */
