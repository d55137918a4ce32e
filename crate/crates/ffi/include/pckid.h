#ifndef PCKID_H
#define PCKID_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum PckidStatus {
  PCKID_STATUS_OK = 0,
  PCKID_STATUS_NULL_POINTER = 1,
  PCKID_STATUS_INVALID_ARGUMENT = 2,
  PCKID_STATUS_SHAPE = 3,
  PCKID_STATUS_PARSE = 4,
  PCKID_STATUS_IO = 5,
  PCKID_STATUS_NUMERICAL = 6,
  PCKID_STATUS_EMPTY_ENSEMBLE = 7,
  PCKID_STATUS_PANIC = 8,
  PCKID_STATUS_OTHER = 9,
} PckidStatus;

typedef enum PckidCovariance {
  PCKID_COVARIANCE_DIAGONAL = 0,
  PCKID_COVARIANCE_FULL = 1,
} PckidCovariance;

/*
 Symmetric PSD kernel matrix together with ensemble statistics.
 */
typedef struct PckidKernel PckidKernel;

/*
 Data matrix with missing entries.
 */
typedef struct PckidMatrix PckidMatrix;

/*
 Ensemble settings; fill with [`pckid_ensemble_config_default`] first.
 */
typedef struct PckidEnsembleConfig {
  /*
   Initializations per mixture order.
   */
  size_t initializations;
  /*
   Largest mixture order; orders run from 2.
   */
  size_t max_components;
  double subsample_fraction;
  size_t em_iterations;
  enum PckidCovariance covariance;
  double variance_floor;
  uint64_t seed;
} PckidEnsembleConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. The pointer is
 valid until the next call into the library on this thread.
 */
const char *pckid_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *pckid_version(void);

/*
 Build a matrix from `rows * cols` row-major values. `observed` holds one
 byte per cell (non-zero = observed); when NULL, NaN cells are missing.

 # Safety
 `values` (and `observed` when given) must point to `rows * cols` elements;
 `out` must be writable.
 */
enum PckidStatus pckid_matrix_new(const double *values,
                                  const uint8_t *observed,
                                  size_t rows,
                                  size_t cols,
                                  struct PckidMatrix **out);

/*
 Read a numeric CSV without header; empty cells and `missing_token`
 (NULL for "NaN") are missing.

 # Safety
 `path` and `missing_token` must be NUL-terminated strings; `out` writable.
 */
enum PckidStatus pckid_matrix_from_csv(const char *path,
                                       const char *missing_token,
                                       struct PckidMatrix **out);

/*
 # Safety
 `m` must come from this library and not be used afterwards. NULL is ignored.
 */
void pckid_matrix_free(struct PckidMatrix *m);

/*
 # Safety
 `m` must be a live matrix handle or NULL.
 */
size_t pckid_matrix_rows(const struct PckidMatrix *m);

/*
 # Safety
 `m` must be a live matrix handle or NULL.
 */
size_t pckid_matrix_cols(const struct PckidMatrix *m);

/*
 Library defaults: Q = G = 30, half-size subsamples, 10 EM iterations,
 diagonal covariances, floor 1e-6, seed 0.

 # Safety
 `out` must be writable.
 */
enum PckidStatus pckid_ensemble_config_default(struct PckidEnsembleConfig *out);

/*
 Build the ensemble kernel of `data`.

 # Safety
 `data` and `config` must be valid; `out` writable.
 */
enum PckidStatus pckid_kernel_build(const struct PckidMatrix *data,
                                    const struct PckidEnsembleConfig *config,
                                    struct PckidKernel **out);

/*
 Wrap a caller-supplied `n * n` row-major symmetric PSD matrix.

 # Safety
 `values` must point to `n * n` doubles; `out` writable.
 */
enum PckidStatus pckid_kernel_from_values(const double *values, size_t n, struct PckidKernel **out);

/*
 # Safety
 `k` must come from this library and not be used afterwards. NULL is ignored.
 */
void pckid_kernel_free(struct PckidKernel *k);

/*
 # Safety
 `k` must be a live kernel handle or NULL.
 */
size_t pckid_kernel_size(const struct PckidKernel *k);

/*
 Ensemble members that entered the average (0 for wrapped matrices).

 # Safety
 `k` must be a live kernel handle or NULL.
 */
size_t pckid_kernel_members(const struct PckidKernel *k);

/*
 Ensemble members dropped after exhausting their retries.

 # Safety
 `k` must be a live kernel handle or NULL.
 */
size_t pckid_kernel_skipped(const struct PckidKernel *k);

/*
 Copy the kernel into `out` (row-major, `len` must equal size * size).

 # Safety
 `k` must be valid; `out` must point to `len` writable doubles.
 */
enum PckidStatus pckid_kernel_copy(const struct PckidKernel *k, double *out, size_t len);

/*
 Spectral clustering: kernel PCA to `k` dimensions, then k-means with
 `restarts` restarts. Writes one label in `0..k` per point.

 # Safety
 `kernel` must be valid; `labels` must point to `len` writable entries.
 */
enum PckidStatus pckid_spectral_cluster(const struct PckidKernel *kernel,
                                        size_t k,
                                        size_t restarts,
                                        uint64_t seed,
                                        size_t *labels,
                                        size_t len);

/*
 Clustering accuracy under the best one-to-one label matching.

 # Safety
 `truth` and `predicted` must point to `n` labels; `out` writable.
 */
enum PckidStatus pckid_accuracy(const size_t *truth,
                                const size_t *predicted,
                                size_t n,
                                double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PCKID_H */
