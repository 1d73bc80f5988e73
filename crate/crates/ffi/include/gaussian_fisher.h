#ifndef GAUSSIAN_FISHER_H
#define GAUSSIAN_FISHER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GfStatus {
  GF_STATUS_OK = 0,
  GF_STATUS_NULL_POINTER = 1,
  GF_STATUS_INVALID_UTF8 = 2,
  GF_STATUS_CONFIG = 3,
  GF_STATUS_INVALID_PARAMETER = 4,
  GF_STATUS_DIMENSION = 5,
  GF_STATUS_NUMERICAL = 6,
  GF_STATUS_IO = 7,
  GF_STATUS_OUT_OF_RANGE = 8,
  GF_STATUS_PANIC = 9,
} GfStatus;

// Result table of one run: named `f64` columns plus `key: value` metadata.
typedef struct GfTable GfTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *gf_version(void);

// Message of the last failure on this thread. The pointer stays valid
// until the next failing call on the same thread; never free it.
const char *gf_last_error_message(void);

// Runs a JSON configuration. `workers = 0` uses all cores; the result
// does not depend on it. On success `*out` owns a new table.
//
// # Safety
// `config_json` must be a NUL-terminated string and `out` writable.
enum GfStatus gf_run_config(const char *config_json, uint32_t workers, struct GfTable **out);

// Releases a table; null is ignored.
//
// # Safety
// `t` must come from [`gf_run_config`] and not have been freed.
void gf_table_free(struct GfTable *t);

// # Safety
// `t` must be a live table and `out` writable.
enum GfStatus gf_table_rows(const struct GfTable *t, size_t *out);

// # Safety
// `t` must be a live table and `out` writable.
enum GfStatus gf_table_cols(const struct GfTable *t, size_t *out);

// # Safety
// `t` must be a live table and `out` writable.
enum GfStatus gf_table_value(const struct GfTable *t, size_t row, size_t col, double *out);

// Index of a column by name.
//
// # Safety
// `t` must be a live table, `name` NUL-terminated and `out` writable.
enum GfStatus gf_table_column_index(const struct GfTable *t, const char *name, size_t *out);

// Name of column `col`; free the result with [`gf_string_free`].
//
// # Safety
// `t` must be a live table and `out` writable.
enum GfStatus gf_table_column_name(const struct GfTable *t, size_t col, char **out);

// Metadata value for `key`; free the result with [`gf_string_free`].
//
// # Safety
// `t` must be a live table, `key` NUL-terminated and `out` writable.
enum GfStatus gf_table_meta(const struct GfTable *t, const char *key, char **out);

// The table as CSV (identical to the command-line output); free the
// result with [`gf_string_free`].
//
// # Safety
// `t` must be a live table and `out` writable.
enum GfStatus gf_table_to_csv(const struct GfTable *t, char **out);

// Releases a string returned by this library; null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void gf_string_free(char *s);

// Cramér-Rao variance bound `1 / (repetitions * fisher)`; infinite for zero information.
//
// # Safety
// `out` must be writable.
enum GfStatus gf_crb_bound(double fisher, uint64_t repetitions, double *out);

// Fisher information `dmu^T sigma^+ dmu` of a Gaussian location family.
// `sigma` is `n x n`, row major.
//
// # Safety
// `d_mean` must point to `n` values, `sigma` to `n * n`, and `out` be writable.
enum GfStatus gf_gaussian_fi(const double *d_mean, const double *sigma, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GAUSSIAN_FISHER_H */
