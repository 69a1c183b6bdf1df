#ifndef FGC_H
#define FGC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FgcStatus {
  FGC_STATUS_OK = 0,
  FGC_STATUS_NULL_POINTER = 1,
  FGC_STATUS_INVALID_ARGUMENT = 2,
  FGC_STATUS_ISOLATED_NODE = 3,
  FGC_STATUS_NON_CONVERGENCE = 4,
  FGC_STATUS_NUMERICAL = 5,
  FGC_STATUS_IO = 6,
  FGC_STATUS_PARSE = 7,
  FGC_STATUS_BUFFER_TOO_SMALL = 8,
  FGC_STATUS_PANIC = 9,
} FgcStatus;

// A dataset: ground-truth graph, cluster and group labels, signals.
typedef struct FgcDataset FgcDataset;

// The outcome of one fit.
typedef struct FgcFit FgcFit;

typedef struct FgcMetrics {
  double fs;
  double ee;
  double ce;
  double balance;
} FgcMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// Valid until the next call on this thread.
const char *fgc_last_error_message(void);

// Library version as a static string.
const char *fgc_version(void);

// Generates a synthetic dataset with the default edge probabilities.
//
// # Safety
// `out` must be valid for writes.
enum FgcStatus fgc_dataset_generate(size_t num_nodes,
                                    size_t num_clusters,
                                    size_t num_groups,
                                    size_t num_signals,
                                    double noise_lo,
                                    double noise_hi,
                                    uint64_t seed,
                                    struct FgcDataset **out);

// Reads a dataset directory.
//
// # Safety
// `dir` must be a NUL-terminated string; `out` must be valid for writes.
enum FgcStatus fgc_dataset_load(const char *dir, struct FgcDataset **out);

// Writes a dataset directory.
//
// # Safety
// `dataset` must come from this library; `dir` must be NUL-terminated.
enum FgcStatus fgc_dataset_save(const struct FgcDataset *dataset, const char *dir);

// Number of nodes, or 0 for a null handle.
//
// # Safety
// `dataset` must be null or come from this library.
size_t fgc_dataset_num_nodes(const struct FgcDataset *dataset);

// # Safety
// `dataset` must be null or come from this library, and not be used afterwards.
void fgc_dataset_free(struct FgcDataset *dataset);

// Fits `method` (e.g. "unified", "corr") on a dataset. `settings` holds
// `key = value` lines and may be null. The cluster count comes from the
// dataset labels.
//
// # Safety
// `dataset` must come from this library; strings must be NUL-terminated;
// `out` must be valid for writes.
enum FgcStatus fgc_fit(const struct FgcDataset *dataset,
                       const char *method,
                       const char *settings,
                       struct FgcFit **out);

// Number of nodes in the fit, or 0 for a null handle.
//
// # Safety
// `fit` must be null or come from this library.
size_t fgc_fit_num_nodes(const struct FgcFit *fit);

// Copies the zero-based cluster labels into `labels[0..len]`.
//
// # Safety
// `fit` must come from this library; `labels` must be valid for `len` writes.
enum FgcStatus fgc_fit_labels(const struct FgcFit *fit, size_t *labels, size_t len);

// Copies the learned edge weights, packed row-major over `i < j`
// (`D (D - 1) / 2` values).
//
// # Safety
// `fit` must come from this library; `weights` must be valid for `len` writes.
enum FgcStatus fgc_fit_weights(const struct FgcFit *fit, double *weights, size_t len);

// Scores a fit against the dataset it was fitted on.
//
// # Safety
// Handles must come from this library; `out` must be valid for writes.
enum FgcStatus fgc_fit_metrics(const struct FgcFit *fit,
                               const struct FgcDataset *dataset,
                               struct FgcMetrics *out);

// Writes a result directory (graph, labels, objective history, settings).
//
// # Safety
// `fit` must come from this library; `dir` must be NUL-terminated.
enum FgcStatus fgc_fit_save(const struct FgcFit *fit, const char *dir);

// # Safety
// `fit` must be null or come from this library, and not be used afterwards.
void fgc_fit_free(struct FgcFit *fit);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FGC_H */
