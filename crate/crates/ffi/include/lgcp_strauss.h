#ifndef LGCP_STRAUSS_H
#define LGCP_STRAUSS_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Model codes accepted by `model` arguments.
#define LS_MODEL_LGCP_STRAUSS 0

#define LS_MODEL_LGCP 1

#define LS_MODEL_STRAUSS 2

typedef enum LsStatus {
  LS_STATUS_OK = 0,
  LS_STATUS_NULL_POINTER = 1,
  LS_STATUS_INVALID_ARGUMENT = 2,
  // Output buffer smaller than required; nothing was written.
  LS_STATUS_BUFFER_TOO_SMALL = 3,
  LS_STATUS_NUMERICAL = 4,
  // Rejection sampling ran out of attempts; the result is partial.
  LS_STATUS_BUDGET_EXHAUSTED = 5,
  LS_STATUS_IO = 6,
  LS_STATUS_PANIC = 7,
} LsStatus;

// Opaque point pattern with its window.
typedef struct LsPattern LsPattern;

// Opaque ABC posterior sample.
typedef struct LsPosterior LsPosterior;

typedef struct LsSimOptions {
  double xmin;
  double xmax;
  double ymin;
  double ymax;
  // GRF grid cells per side.
  size_t grid;
  size_t burnin;
} LsSimOptions;

typedef struct LsAbcOptions {
  size_t k_pilot;
  size_t k_abc;
  size_t m;
  double quantile;
  size_t budget_factor;
  size_t grid;
  size_t burnin;
} LsAbcOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until
// the next failing call on the same thread.
const char *ls_last_error(void);

// Library version as a static NUL-terminated string.
const char *ls_version(void);

// Length of the default summary vector.
size_t ls_summary_dim(void);

// Number of free parameters of a model, or 0 for an unknown code.
size_t ls_model_dim(uint32_t model_code);

// # Safety
// `xs` and `ys` must hold `n` values each; `out` must be writable.
enum LsStatus ls_pattern_new(double xmin,
                             double xmax,
                             double ymin,
                             double ymax,
                             const double *xs,
                             const double *ys,
                             size_t n,
                             struct LsPattern **out);

// Read a pattern CSV (`x,y` with a `# window` line or a sidecar).
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum LsStatus ls_pattern_read_csv(const char *path, struct LsPattern **out);

// # Safety
// `pattern` must be null or a handle from this library, not yet freed.
void ls_pattern_free(struct LsPattern *pattern);

// Number of points, or 0 for null.
//
// # Safety
// `pattern` must be null or a live handle.
size_t ls_pattern_len(const struct LsPattern *pattern);

// Copy coordinates into `xs`, `ys` (each of capacity `cap`).
//
// # Safety
// `pattern` must be a live handle; `xs`, `ys` valid for `cap` writes.
enum LsStatus ls_pattern_coords(const struct LsPattern *pattern,
                                double *xs,
                                double *ys,
                                size_t cap);

// Simulate one pattern. `theta` holds the model's free parameters in
// canonical order (`ls_model_dim` values).
//
// # Safety
// `theta` valid for `dim` reads; `options` readable; `out` writable.
enum LsStatus ls_simulate(uint32_t model_code,
                          const double *theta,
                          size_t dim,
                          const struct LsSimOptions *options,
                          uint64_t seed,
                          struct LsPattern **out);

// Default 56-entry summary vector. Non-finite entries are written as is.
//
// # Safety
// `pattern` live; `values` valid for `cap` writes.
enum LsStatus ls_summary_vector(const struct LsPattern *pattern, double *values, size_t cap);

// L-function on `r` (strictly increasing). `defined[k]` is 1 where the
// estimate exists.
//
// # Safety
// `pattern` live; `r`, `values`, `defined` valid for `m` elements.
enum LsStatus ls_l_function(const struct LsPattern *pattern,
                            const double *r,
                            size_t m,
                            double *values,
                            uint8_t *defined);

// Fit the model to `observed` by semi-automatic ABC with `prior_name`
// (p1, p2, p3 or oak). On `BudgetExhausted` the handle is still set and
// holds the partial sample.
//
// # Safety
// `observed` live; `prior_name` NUL-terminated; `options` readable; `out` writable.
enum LsStatus ls_abc_fit(const struct LsPattern *observed,
                         uint32_t model_code,
                         const char *prior_name,
                         const struct LsAbcOptions *options,
                         uint64_t seed,
                         struct LsPosterior **out);

// # Safety
// `posterior` must be null or a live handle.
void ls_posterior_free(struct LsPosterior *posterior);

// Accepted draws, or 0 for null.
//
// # Safety
// `posterior` must be null or a live handle.
size_t ls_posterior_len(const struct LsPosterior *posterior);

// Tolerance used by the rejection step, or NaN for null.
//
// # Safety
// `posterior` must be null or a live handle.
double ls_posterior_epsilon(const struct LsPosterior *posterior);

// Draws as a row-major `len x dim` matrix of free parameters.
//
// # Safety
// `posterior` live; `values` valid for `cap` writes.
enum LsStatus ls_posterior_samples(const struct LsPosterior *posterior, double *values, size_t cap);

// Global ERL envelope. `curves` is row-major `n_curves x len` with the
// data curve first; `lo`, `hi` receive the envelope (NaN where
// undefined), `p_value` the test p-value and `rejected` 0 or 1.
//
// # Safety
// `r` valid for `len` reads; `curves` for `n_curves * len` reads;
// `lo`, `hi` for `len` writes; `p_value`, `rejected` writable.
enum LsStatus ls_global_envelope(const double *r,
                                 size_t len,
                                 const double *curves,
                                 size_t n_curves,
                                 double level,
                                 double *lo,
                                 double *hi,
                                 double *p_value,
                                 uint8_t *rejected);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LGCP_STRAUSS_H */
