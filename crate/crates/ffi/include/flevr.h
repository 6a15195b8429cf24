#ifndef FLEVR_H
#define FLEVR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FlevrMode {
  FLEVR_MODE_GFWER = 0,
  FLEVR_MODE_PFP = 1,
  FLEVR_MODE_FDR = 2,
} FlevrMode;

// Result code of every fallible call.
typedef enum FlevrStatus {
  FLEVR_STATUS_OK = 0,
  FLEVR_STATUS_NULL_POINTER = 1,
  FLEVR_STATUS_INVALID_ARGUMENT = 2,
  FLEVR_STATUS_IO = 3,
  FLEVR_STATUS_PARSE = 4,
  FLEVR_STATUS_NUMERICAL = 5,
  FLEVR_STATUS_PANIC = 6,
} FlevrStatus;

// Opaque dataset handle.
typedef struct FlevrDataset FlevrDataset;

// Opaque selection result handle.
typedef struct FlevrSelection FlevrSelection;

// Selection settings. Obtain defaults from [`flevr_select_config_default`].
typedef struct FlevrSelectConfig {
  double alpha;
  enum FlevrMode mode;
  // gFWER tolerance (used when `mode` is `Gfwer`).
  size_t k;
  // PFP level (used when `mode` is `Pfp`).
  double q;
  // FDR level (used when `mode` is `Fdr`).
  double f;
  size_t folds;
  // Sampled subsets; 0 selects the default budget.
  size_t budget;
  size_t imputations;
  size_t mice_iterations;
  size_t donors;
  uint64_t seed;
} FlevrSelectConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next call into this library on the same thread.
const char *flevr_last_error(void);

// Library version as a static string.
const char *flevr_version(void);

struct FlevrSelectConfig flevr_select_config_default(void);

// Load a CSV file. `na` may be null for the default token "NA".
//
// # Safety
// String arguments must be null or nul-terminated; `out` must be writable.
enum FlevrStatus flevr_dataset_from_csv(const char *path,
                                        const char *outcome,
                                        const char *na,
                                        struct FlevrDataset **out);

// Build a dataset from a row-major `n × p` feature matrix and an outcome
// vector. NaN marks a missing cell.
//
// # Safety
// `x` must point to `n * p` doubles, `y` to `n` doubles; `out` must be writable.
enum FlevrStatus flevr_dataset_from_arrays(const double *x,
                                           const double *y,
                                           size_t n,
                                           size_t p,
                                           struct FlevrDataset **out);

// # Safety
// `ds` must be a live handle; `n` and `p` must be writable.
enum FlevrStatus flevr_dataset_shape(const struct FlevrDataset *ds, size_t *n, size_t *p);

// # Safety
// `ds` must be null or a handle not yet freed.
void flevr_dataset_free(struct FlevrDataset *ds);

// Run importance estimation, testing and selection.
//
// # Safety
// `ds` and `cfg` must be valid pointers; `out` must be writable.
enum FlevrStatus flevr_select(const struct FlevrDataset *ds,
                              const struct FlevrSelectConfig *cfg,
                              struct FlevrSelection **out);

// Number of features the selection was run on.
//
// # Safety
// `sel` must be null or a live handle.
size_t flevr_selection_num_features(const struct FlevrSelection *sel);

// Copy the final selected set (0-based, ascending) into `buf`. `len`
// receives the set size even when `cap` is too small.
//
// # Safety
// `buf` must hold `cap` entries; `len` must be writable.
enum FlevrStatus flevr_selection_final_set(const struct FlevrSelection *sel,
                                           size_t *buf,
                                           size_t cap,
                                           size_t *len);

// Copy the Holm-selected initial set (0-based, ascending).
//
// # Safety
// As for [`flevr_selection_final_set`].
enum FlevrStatus flevr_selection_initial_set(const struct FlevrSelection *sel,
                                             size_t *buf,
                                             size_t cap,
                                             size_t *len);

// Copy the pooled importance estimates (one per feature).
//
// # Safety
// `buf` must hold `cap` doubles.
enum FlevrStatus flevr_selection_importance(const struct FlevrSelection *sel,
                                            double *buf,
                                            size_t cap);

// Copy the Holm-adjusted p-values (one per feature).
//
// # Safety
// `buf` must hold `cap` doubles.
enum FlevrStatus flevr_selection_p_adjusted(const struct FlevrSelection *sel,
                                            double *buf,
                                            size_t cap);

// JSON report (1-based indices, as written by the CLI). Owned by the
// handle; valid until it is freed.
//
// # Safety
// `sel` must be null or a live handle.
const char *flevr_selection_json(const struct FlevrSelection *sel);

// # Safety
// `sel` must be null or a handle not yet freed.
void flevr_selection_free(struct FlevrSelection *sel);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLEVR_H */
