#ifndef SYLSOLVE_H
#define SYLSOLVE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. `SYL_STATUS_OK` is zero; everything else is an error.
 */
typedef enum {
  SYL_STATUS_OK = 0,
  SYL_STATUS_NULL_ARGUMENT = 1,
  SYL_STATUS_INVALID_UTF8 = 2,
  SYL_STATUS_PARSE = 3,
  SYL_STATUS_INVALID = 4,
  SYL_STATUS_UNSUPPORTED = 5,
  SYL_STATUS_SINGULAR = 6,
  SYL_STATUS_NO_CONVERGENCE = 7,
  SYL_STATUS_OUT_OF_RANGE = 8,
  SYL_STATUS_BUFFER_TOO_SMALL = 9,
  SYL_STATUS_PANIC = 10,
  SYL_STATUS_INTERNAL = 11,
} SylStatus;

typedef enum {
  SYL_METHOD_FORMAL = 0,
  SYL_METHOD_PENCIL = 1,
} SylMethod;

typedef enum {
  SYL_VERDICT_NONSINGULAR = 0,
  SYL_VERDICT_SINGULAR = 1,
} SylVerdict;

typedef enum {
  SYL_REASON_OK = 0,
  SYL_REASON_PRODUCT_IRREGULAR = 1,
  SYL_REASON_SPECTRA_INTERSECT = 2,
  SYL_REASON_RECIPROCAL_PAIR = 3,
  SYL_REASON_MINUS_ONE_MULTIPLICITY = 4,
  SYL_REASON_PENCIL_IRREGULAR = 5,
  SYL_REASON_ROOT_OF_UNITY_MULTIPLICITY = 6,
  SYL_REASON_ELIMINATION_SINGULAR_COEFF = 7,
} SylReason;

/**
 * Opaque solution: one `n × n` matrix per unknown.
 */
typedef struct SylSolution SylSolution;

/**
 * Opaque parsed system.
 */
typedef struct SylSystem SylSystem;

/**
 * Certificate summary. `component` is 0-based, or -1 when the verdict is
 * not tied to one component.
 */
typedef struct {
  SylVerdict verdict;
  SylReason reason;
  int64_t component;
} SylCertificate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parse a system from its text form. On success `*out` owns a new handle
 * that must be released with [`syl_system_free`].
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
SylStatus syl_system_parse(const char *text, SylSystem **out);

/**
 * Release a system handle. Null is ignored.
 *
 * # Safety
 * `sys` must come from [`syl_system_parse`] and not be freed twice.
 */
void syl_system_free(SylSystem *sys);

/**
 * Matrix size `n`, number of unknowns and number of equations.
 *
 * # Safety
 * All pointers must be valid.
 */
SylStatus syl_system_shape(const SylSystem *sys, size_t *n, size_t *unknowns, size_t *equations);

/**
 * Decide nonsingularity without solving.
 *
 * # Safety
 * `sys` and `out` must be valid.
 */
SylStatus syl_system_certify(const SylSystem *sys, SylMethod method, SylCertificate *out);

/**
 * Solve the system. A singular system yields `SYL_STATUS_SINGULAR`.
 *
 * # Safety
 * `sys` and `out` must be valid.
 */
SylStatus syl_system_solve(const SylSystem *sys, SylSolution **out);

/**
 * Largest Frobenius norm over the per-equation residuals of `sol`.
 *
 * # Safety
 * All pointers must be valid, and `sol` must solve `sys`.
 */
SylStatus syl_solution_residual(const SylSystem *sys, const SylSolution *sol, double *out);

/**
 * Number of unknowns held by a solution; 0 for null.
 *
 * # Safety
 * `sol` must be null or valid.
 */
size_t syl_solution_count(const SylSolution *sol);

/**
 * Copy unknown `k` (0-based) into `buf`, column-major with interleaved
 * real/imaginary parts. `len` counts doubles and must be at least `2·n·n`;
 * `*written` receives the number needed.
 *
 * # Safety
 * `buf` must hold `len` doubles; `sol` and `written` must be valid.
 */
SylStatus syl_solution_get(const SylSolution *sol,
                           size_t k,
                           double *buf,
                           size_t len,
                           size_t *written);

/**
 * Release a solution handle. Null is ignored.
 *
 * # Safety
 * `sol` must come from [`syl_system_solve`] and not be freed twice.
 */
void syl_solution_free(SylSolution *sol);

/**
 * Copy the last error message of this thread into `buf` (NUL-terminated,
 * truncated to fit). Returns the full length including the NUL, so a
 * zero-length call sizes the buffer.
 *
 * # Safety
 * `buf` must hold `len` bytes or be null with `len == 0`.
 */
size_t syl_last_error(char *buf, size_t len);

/**
 * Static name of a status code.
 */
const char *syl_status_name(SylStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SYLSOLVE_H */
