/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef HQR_H
#define HQR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Classical unblocked routine.
 */
#define HQR_ROUTINE_HT 0

/**
 * Fused unblocked routine.
 */
#define HQR_ROUTINE_MHT 1

/**
 * Classical blocked routine.
 */
#define HQR_ROUTINE_BLOCKED_HT 2

/**
 * Fused blocked routine.
 */
#define HQR_ROUTINE_BLOCKED_MHT 3

typedef enum HqrStatus {
  HQR_STATUS_OK = 0,
  HQR_STATUS_NULL_POINTER = 1,
  HQR_STATUS_INVALID_ARGUMENT = 2,
  HQR_STATUS_DIMENSION = 3,
  HQR_STATUS_WIDE_MATRIX = 4,
  HQR_STATUS_SINGULAR = 5,
  HQR_STATUS_CONFIG = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  HQR_STATUS_INTERNAL = 7,
} HqrStatus;

/**
 * Opaque QR factorization.
 */
typedef struct HqrFactorization HqrFactorization;

/**
 * Opaque dense matrix.
 */
typedef struct HqrMatrix HqrMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static description of a status code.
 */
const char *hqr_status_string(enum HqrStatus status);

/**
 * Message of the last failed call on this thread. The pointer stays valid
 * until the next failing call on the same thread.
 */
const char *hqr_last_error(void);

/**
 * Zero matrix of the given shape.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum HqrStatus hqr_matrix_new(size_t rows, size_t cols, struct HqrMatrix **out);

/**
 * Matrix copied from `rows * cols` column-major values.
 *
 * # Safety
 * `data` must point to `rows * cols` readable doubles; `out` must be valid
 * for writes.
 */
enum HqrStatus hqr_matrix_from_col_major(size_t rows,
                                         size_t cols,
                                         const double *data,
                                         struct HqrMatrix **out);

/**
 * Releases a matrix; null is ignored.
 *
 * # Safety
 * `m` must come from this library and not be freed twice.
 */
void hqr_matrix_free(struct HqrMatrix *m);

/**
 * Row count, or 0 for null.
 *
 * # Safety
 * `m` must be null or a live matrix handle.
 */
size_t hqr_matrix_rows(const struct HqrMatrix *m);

/**
 * Column count, or 0 for null.
 *
 * # Safety
 * `m` must be null or a live matrix handle.
 */
size_t hqr_matrix_cols(const struct HqrMatrix *m);

/**
 * # Safety
 * `m` must be a live matrix handle and `out` valid for writes.
 */
enum HqrStatus hqr_matrix_get(const struct HqrMatrix *m, size_t i, size_t j, double *out);

/**
 * # Safety
 * `m` must be a live matrix handle.
 */
enum HqrStatus hqr_matrix_set(struct HqrMatrix *m, size_t i, size_t j, double value);

/**
 * Copies the entries column-major into `out`, which holds `len` doubles.
 *
 * # Safety
 * `m` must be a live matrix handle and `out` valid for `len` writes.
 */
enum HqrStatus hqr_matrix_copy_to(const struct HqrMatrix *m, double *out, size_t len);

/**
 * Factors `a` with one of the `HQR_ROUTINE_*` codes. `block_size` is used
 * only by the blocked routines.
 *
 * # Safety
 * `a` must be a live matrix handle and `out` valid for writes.
 */
enum HqrStatus hqr_factor(const struct HqrMatrix *a,
                          uint32_t routine,
                          size_t block_size,
                          struct HqrFactorization **out);

/**
 * Explicit `m x m` orthogonal factor as a new matrix.
 *
 * # Safety
 * `f` must be a live factorization handle and `out` valid for writes.
 */
enum HqrStatus hqr_factorization_q(const struct HqrFactorization *f, struct HqrMatrix **out);

/**
 * Upper-triangular `m x n` factor as a new matrix.
 *
 * # Safety
 * `f` must be a live factorization handle and `out` valid for writes.
 */
enum HqrStatus hqr_factorization_r(const struct HqrFactorization *f, struct HqrMatrix **out);

/**
 * Relative residual `|A - QR|_F / |A|_F` and `|Q^T Q - I|_F`.
 *
 * # Safety
 * Handles must be live; output pointers valid for writes.
 */
enum HqrStatus hqr_factorization_check(const struct HqrMatrix *a,
                                       const struct HqrFactorization *f,
                                       double *residual,
                                       double *orthogonality);

/**
 * Releases a factorization; null is ignored.
 *
 * # Safety
 * `f` must come from [`hqr_factor`] and not be freed twice.
 */
void hqr_factorization_free(struct HqrFactorization *f);

/**
 * Level-count ratio of the fused to the classical operation graph for an
 * `m x n` matrix.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum HqrStatus hqr_theta(size_t m, size_t n, double *out);

/**
 * Total cycles of one routine on a single processing element under the
 * default cost table.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum HqrStatus hqr_simulate_cycles(uint32_t routine, size_t m, size_t n, uint64_t *out);

/**
 * Speedup of a `k x k` tile array over one tile for an `n x n` matrix under
 * the default cost table.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum HqrStatus hqr_simulate_tile_speedup(uint32_t routine, size_t n, size_t k, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HQR_H */
