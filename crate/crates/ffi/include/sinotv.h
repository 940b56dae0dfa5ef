#ifndef SINOTV_H
#define SINOTV_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  SINOTV_STATUS_OK = 0,
  SINOTV_STATUS_NULL_POINTER = 1,
  SINOTV_STATUS_INVALID_GEOMETRY = 2,
  SINOTV_STATUS_DIMENSION_MISMATCH = 3,
  SINOTV_STATUS_INVALID_ARGUMENT = 4,
  SINOTV_STATUS_FORMAT = 5,
  SINOTV_STATUS_CONFIG = 6,
  SINOTV_STATUS_IO = 7,
  SINOTV_STATUS_PANIC = 8,
} SinotvStatus;

/**
 * Opaque system matrix.
 */
typedef struct SinotvMatrix SinotvMatrix;

/**
 * Settings of the joint solver. Start from [`sinotv_solver_config_default`].
 */
typedef struct {
  double alpha;
  double beta;
  double lambda1;
  double lambda2;
  double lambda3;
  double lambda4;
  size_t outer_max_iters;
  double outer_rel_tol;
  size_t cg_max_iters;
  double cg_rel_tol;
  double g_floor;
} SinotvSolverConfig;

/**
 * Settings of the sinogram ROF solver.
 */
typedef struct {
  double beta;
  double lambda1;
  double lambda2;
  size_t max_iters;
  double rel_tol;
  size_t cg_max_iters;
  double cg_rel_tol;
  double g_floor;
} SinotvRofConfig;

/**
 * Outcome of an iterative solve.
 */
typedef struct {
  size_t iterations;
  bool converged;
} SinotvSolveInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the message of the last failure on this thread into `buf`
 * (NUL-terminated, truncated to `len`). Returns the full message length, or
 * 0 when there is none.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t sinotv_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sinotv_version(void);

/**
 * Builds the system matrix for a square-pixel parallel-beam geometry with
 * unit pixels and bins, angles starting at 0.
 *
 * # Safety
 * `out` must be a valid pointer. The handle must be released with
 * [`sinotv_matrix_free`].
 */
SinotvStatus sinotv_matrix_new(size_t rows,
                               size_t cols,
                               size_t num_angles,
                               size_t num_bins,
                               double angle_step_deg,
                               SinotvMatrix **out);

/**
 * # Safety
 * `m` must be null or a handle from [`sinotv_matrix_new`] not yet freed.
 */
void sinotv_matrix_free(SinotvMatrix *m);

/**
 * Number of nonzero entries.
 *
 * # Safety
 * `m` must be a live handle and `out` valid.
 */
SinotvStatus sinotv_matrix_nnz(const SinotvMatrix *m, size_t *out);

/**
 * `sino = R image`.
 *
 * # Safety
 * `m` must be a live handle; `image` and `sino` must hold `image_len` and
 * `sino_len` doubles.
 */
SinotvStatus sinotv_forward_project(const SinotvMatrix *m,
                                    const double *image,
                                    size_t image_len,
                                    double *sino,
                                    size_t sino_len);

/**
 * `image = R^T sino`.
 *
 * # Safety
 * As for [`sinotv_forward_project`].
 */
SinotvStatus sinotv_back_project(const SinotvMatrix *m,
                                 const double *sino,
                                 size_t sino_len,
                                 double *image,
                                 size_t image_len);

SinotvSolverConfig sinotv_solver_config_default(void);

SinotvRofConfig sinotv_rof_config_default(double beta);

/**
 * Joint image and sinogram TV reconstruction of `sino`. Writes the
 * nonnegative image, and the regularised sinogram when `sino_out` is not
 * null. Not converging within the iteration cap is not an error; check
 * `info`.
 *
 * # Safety
 * `m` and `cfg` must be valid; buffers must hold the stated lengths;
 * `sino_out` and `info` may be null.
 */
SinotvStatus sinotv_reconstruct_joint(const SinotvMatrix *m,
                                      const SinotvSolverConfig *cfg,
                                      const double *sino,
                                      size_t sino_len,
                                      double *image_out,
                                      size_t image_len,
                                      double *sino_out,
                                      size_t sino_out_len,
                                      SinotvSolveInfo *info);

/**
 * Weighted ROF denoising of a `bins x angles` sinogram.
 *
 * # Safety
 * `cfg` must be valid; `sino` and `out` must hold `bins * angles` doubles;
 * `info` may be null.
 */
SinotvStatus sinotv_sinogram_rof(const SinotvRofConfig *cfg,
                                 size_t bins,
                                 size_t angles,
                                 double angle_step_deg,
                                 const double *sino,
                                 double *out,
                                 SinotvSolveInfo *info);

/**
 * Closed-form ROF solution for the sinogram of a disc of radius `r`: the
 * plateau half-width `kappa` and height `delta`.
 *
 * # Safety
 * `kappa` and `delta` must be valid pointers.
 */
SinotvStatus sinotv_solve_kappa(double r, double beta, double *kappa, double *delta);

/**
 * `20 log10(||truth|| / ||truth - rec||)` over `len` values.
 *
 * # Safety
 * `truth` and `rec` must hold `len` doubles; `out` must be valid.
 */
SinotvStatus sinotv_snr_db(const double *truth, const double *rec, size_t len, double *out);

/**
 * Poisson noise with `mean_counts_at_max` expected counts in the hottest
 * entry. The same seed and layout give the same output on every platform.
 *
 * # Safety
 * `sino` and `out` must hold `bins * angles` doubles.
 */
SinotvStatus sinotv_apply_poisson(size_t bins,
                                  size_t angles,
                                  const double *sino,
                                  double mean_counts_at_max,
                                  uint64_t seed,
                                  double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SINOTV_H */
