#ifndef SGLDE_H
#define SGLDE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum SgldeStatus {
  SGLDE_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  SGLDE_STATUS_NULL_POINTER = 1,
  /**
   * An argument is outside its domain.
   */
  SGLDE_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The numerics failed: overflow, no root, non-convergence and so on.
   */
  SGLDE_STATUS_NUMERICAL = 3,
  /**
   * A file could not be read or written.
   */
  SGLDE_STATUS_IO = 4,
  /**
   * Input could not be parsed.
   */
  SGLDE_STATUS_PARSE = 5,
  /**
   * A caller buffer is too small.
   */
  SGLDE_STATUS_BUFFER_TOO_SMALL = 6,
  /**
   * An internal panic was caught at the boundary.
   */
  SGLDE_STATUS_PANIC = 7,
} SgldeStatus;

/**
 * Per-iteration EM estimates.
 */
typedef struct SgldeEmTrace SgldeEmTrace;

/**
 * Observations at arbitrary increasing times.
 */
typedef struct SgldeObservations SgldeObservations;

/**
 * Sampled path on a uniform grid.
 */
typedef struct SgldePath SgldePath;

typedef struct SgldeParams {
  double alpha;
  double m;
  double sigma;
} SgldeParams;

typedef struct SgldeEstimate {
  double alpha;
  double m;
  double sigma;
  /**
   * |g(m)| at the returned m.
   */
  double residual;
  bool converged;
} SgldeEstimate;

typedef struct SgldeEmConfig {
  size_t iterations;
  size_t n_bridges;
  size_t max_attempts;
  double fine_step;
  uint64_t seed;
} SgldeEmConfig;

typedef struct SgldeEmRow {
  size_t iter;
  double alpha;
  double m;
  double sigma;
  double fallback_fraction;
  bool converged;
} SgldeEmRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, including the git description of the build.
 */
const char *sglde_version(void);

/**
 * Message of the last failure on this thread; empty if none. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *sglde_last_error_message(void);

/**
 * Exact simulation on `n` uniform steps of [t0, t_end] from `x0`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum SgldeStatus sglde_simulate(struct SgldeParams params,
                                double x0,
                                double t0,
                                double t_end,
                                size_t n,
                                uint64_t seed,
                                struct SgldePath **out);

/**
 * Wraps `len` values sampled uniformly on [t0, t_end].
 *
 * # Safety
 * `values` must point to `len` readable doubles; `out` as in [`sglde_simulate`].
 */
enum SgldeStatus sglde_path_from_values(double t0,
                                        double t_end,
                                        const double *values,
                                        size_t len,
                                        struct SgldePath **out);

/**
 * Number of samples, or 0 for a null handle.
 *
 * # Safety
 * `path` must be null or a live handle.
 */
size_t sglde_path_len(const struct SgldePath *path);

/**
 * Copies the samples into `buf`, which must hold `sglde_path_len` values.
 *
 * # Safety
 * `path` must be a live handle and `buf` writable for `cap` doubles.
 */
enum SgldeStatus sglde_path_values(const struct SgldePath *path, double *buf, size_t cap);

/**
 * Copies the sample times into `buf`.
 *
 * # Safety
 * As for [`sglde_path_values`].
 */
enum SgldeStatus sglde_path_times(const struct SgldePath *path, double *buf, size_t cap);

/**
 * # Safety
 * `path` must be null or a handle not yet freed.
 */
void sglde_path_free(struct SgldePath *path);

/**
 * Reads a `t,x` CSV file on a uniform grid.
 *
 * # Safety
 * `file` must be a NUL-terminated string; `out` as in [`sglde_simulate`].
 */
enum SgldeStatus sglde_path_read_csv(const char *file, struct SgldePath **out);

/**
 * # Safety
 * `path` must be a live handle and `file` a NUL-terminated string.
 */
enum SgldeStatus sglde_path_write_csv(const struct SgldePath *path, const char *file);

/**
 * Joint estimate of (α, m, σ) with the default root-search settings.
 *
 * # Safety
 * `path` must be a live handle and `out` writable.
 */
enum SgldeStatus sglde_estimate_joint(const struct SgldePath *path, struct SgldeEstimate *out);

/**
 * Keeps a fraction of the grid points, always including both ends.
 *
 * # Safety
 * `path` must be a live handle; `out` as in [`sglde_simulate`].
 */
enum SgldeStatus sglde_subsample(const struct SgldePath *path,
                                 double keep_fraction,
                                 struct SgldeObservations **out);

/**
 * Builds observations from `len` strictly increasing times and positive values.
 *
 * # Safety
 * `times` and `values` must point to `len` readable doubles each.
 */
enum SgldeStatus sglde_observations_from_values(const double *times,
                                                const double *values,
                                                size_t len,
                                                struct SgldeObservations **out);

/**
 * # Safety
 * `obs` must be null or a live handle.
 */
size_t sglde_observations_len(const struct SgldeObservations *obs);

/**
 * Copies times and values into two buffers of at least `sglde_observations_len` entries.
 *
 * # Safety
 * `obs` must be a live handle; both buffers writable for `cap` doubles.
 */
enum SgldeStatus sglde_observations_get(const struct SgldeObservations *obs,
                                        double *times,
                                        double *values,
                                        size_t cap);

/**
 * # Safety
 * `obs` must be null or a handle not yet freed.
 */
void sglde_observations_free(struct SgldeObservations *obs);

/**
 * # Safety
 * As for [`sglde_path_read_csv`].
 */
enum SgldeStatus sglde_observations_read_csv(const char *file, struct SgldeObservations **out);

/**
 * # Safety
 * As for [`sglde_path_write_csv`].
 */
enum SgldeStatus sglde_observations_write_csv(const struct SgldeObservations *obs,
                                              const char *file);

/**
 * Default EM settings: 10 iterations, 100 bridges per gap, 50 attempts per
 * bridge, fine step 1e-3, seed 0.
 */
struct SgldeEmConfig sglde_em_config_default(void);

/**
 * Runs Monte-Carlo EM. A null `config` uses [`sglde_em_config_default`].
 *
 * # Safety
 * `obs` must be a live handle, `config` null or readable, `out` as in [`sglde_simulate`].
 */
enum SgldeStatus sglde_em_run(const struct SgldeObservations *obs,
                              const struct SgldeEmConfig *config,
                              struct SgldeEmTrace **out);

/**
 * Number of trace rows: the initial estimate plus one per iteration.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
size_t sglde_em_trace_len(const struct SgldeEmTrace *trace);

/**
 * # Safety
 * `trace` must be a live handle and `out` writable.
 */
enum SgldeStatus sglde_em_trace_get(const struct SgldeEmTrace *trace,
                                    size_t row,
                                    struct SgldeEmRow *out);

/**
 * # Safety
 * `trace` must be null or a handle not yet freed.
 */
void sglde_em_trace_free(struct SgldeEmTrace *trace);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SGLDE_H */
