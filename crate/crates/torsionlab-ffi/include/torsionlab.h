#ifndef TORSIONLAB_H
#define TORSIONLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Validation failures map to `TL_INVALID`, numerical ones to
 * `TL_NUMERICAL`.
 */
typedef enum TlStatus {
  TL_OK = 0,
  TL_NULL_POINTER = 1,
  TL_INVALID = 2,
  TL_NUMERICAL = 3,
  TL_PANIC = 4,
} TlStatus;

/**
 * Boundary condition at the ends of an interval or cylinder.
 */
typedef enum TlBoundary {
  TL_CLOSED = 0,
  TL_ABSOLUTE = 1,
  TL_RELATIVE = 2,
} TlBoundary;

/**
 * Opaque lattice Laplacian on a twisted cylinder.
 */
typedef struct TlLattice TlLattice;

/**
 * Opaque spectrum of a model Laplacian.
 */
typedef struct TlSpectrum TlSpectrum;

/**
 * One evaluation of the gluing formula.
 */
typedef struct TlGluingReport {
  double l;
  double r;
  double alpha;
  double log_t_z;
  double log_t_abs;
  double log_t_rel;
  double t_f;
  double euler_term;
  double residual;
  double error_budget;
} TlGluingReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (nul-terminated,
 * truncated to `len`). Returns the full message length without the nul, or
 * 0 when there is no error.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t tl_last_error_message(char *buf, size_t len);

/**
 * Library version as a static nul-terminated string.
 */
const char *tl_version(void);

/**
 * Spectrum of the circle of length `l` twisted by `alpha`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum TlStatus tl_spectrum_circle(double l, double alpha, struct TlSpectrum **out);

/**
 * Spectrum of the interval of length `l`; `bc` must not be closed.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum TlStatus tl_spectrum_interval(double l, enum TlBoundary bc, struct TlSpectrum **out);

/**
 * Spectrum of the flat cylinder (circle of length `ly`, twist `alpha`) times
 * an interval of length `a`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum TlStatus tl_spectrum_cylinder(double ly,
                                   double alpha,
                                   double a,
                                   enum TlBoundary bc,
                                   struct TlSpectrum **out);

/**
 * Spectrum of the twisted flat torus.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum TlStatus tl_spectrum_torus(double ly, double alpha, double lx, struct TlSpectrum **out);

/**
 * Top form degree of the spectrum.
 *
 * # Safety
 * `s` must be null or a live handle.
 */
size_t tl_spectrum_dimension(const struct TlSpectrum *s);

/**
 * Zeta-regularized `log det'` in degree `p` with truncation `k`.
 *
 * # Safety
 * `s` must be a live handle and `value`, `error` valid pointers.
 */
enum TlStatus tl_spectrum_log_det(const struct TlSpectrum *s,
                                  size_t p,
                                  size_t k,
                                  double *value,
                                  double *error);

/**
 * Logarithm of the analytic torsion.
 *
 * # Safety
 * `s` must be a live handle and `value`, `error` valid pointers.
 */
enum TlStatus tl_spectrum_log_torsion(const struct TlSpectrum *s,
                                      size_t k,
                                      double *value,
                                      double *error);

/**
 * # Safety
 * `s` must be null or a handle not yet freed.
 */
void tl_spectrum_free(struct TlSpectrum *s);

/**
 * Lattice Laplacian on the twisted cylinder with the given mesh.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum TlStatus tl_lattice_new(double mesh,
                             double ly,
                             double alpha,
                             double length,
                             enum TlBoundary bc,
                             struct TlLattice **out);

/**
 * Number of numerically zero eigenvalues in `degree`.
 *
 * # Safety
 * `h` must be a live handle and `out` a valid pointer.
 */
enum TlStatus tl_lattice_zero_modes(const struct TlLattice *h, size_t degree, size_t *out);

/**
 * Smallest positive eigenvalue in `degree`; NaN when there is none.
 *
 * # Safety
 * `h` must be a live handle and `out` a valid pointer.
 */
enum TlStatus tl_lattice_min_positive(const struct TlLattice *h, size_t degree, double *out);

/**
 * # Safety
 * `h` must be null or a handle not yet freed.
 */
void tl_lattice_free(struct TlLattice *h);

/**
 * Gluing formula for the circle of arc length `l` cut in two.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum TlStatus tl_glue_circle(double l, size_t k, struct TlGluingReport *out);

/**
 * Gluing formula for the twisted torus. An integer `alpha` is rejected with
 * `TL_INVALID`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum TlStatus tl_glue_torus(double ly,
                            double alpha,
                            double a1,
                            double a2,
                            size_t k,
                            struct TlGluingReport *out);

/**
 * Analytic and Reidemeister torsion of the twisted circle with `cells` edges.
 *
 * # Safety
 * `analytic` and `reidemeister` must be valid pointers.
 */
enum TlStatus tl_cheeger_muller(double alpha,
                                double l,
                                size_t cells,
                                size_t k,
                                double *analytic,
                                double *reidemeister);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TORSIONLAB_H */
