#ifndef COMPACT_GBDT_H
#define COMPACT_GBDT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CgStatus {
  CG_STATUS_OK = 0,
  CG_STATUS_EMPTY_COLUMN,
  CG_STATUS_UNSUPPORTED_WIDTH,
  CG_STATUS_INDEX_OUT_OF_RANGE,
  CG_STATUS_ALL_MISSING,
  CG_STATUS_UNEXPECTED_MISSING,
  CG_STATUS_RESIZE_NOOP,
  CG_STATUS_INVALID_RESIZE_TARGET,
  CG_STATUS_STALE_BINNING,
  CG_STATUS_SHAPE_MISMATCH,
  CG_STATUS_INVALID_LABEL,
  CG_STATUS_EMPTY_DATASET,
  CG_STATUS_DIVERGENCE_DETECTED,
  CG_STATUS_SCHEMA_MISMATCH,
  CG_STATUS_DUPLICATE_KEY,
  CG_STATUS_DEGENERATE_LABELS,
  CG_STATUS_INVALID_FOLD_COUNT,
  CG_STATUS_CONFIG_ERROR,
  CG_STATUS_PARSE_ERROR,
  CG_STATUS_SCHEMA_ERROR,
  CG_STATUS_VERSION_ERROR,
  CG_STATUS_IO,
  // A required pointer argument was null.
  CG_STATUS_NULL_ARGUMENT,
  // A string argument was not valid UTF-8.
  CG_STATUS_INVALID_UTF8,
  // The library panicked; the handle involved should be considered unusable.
  CG_STATUS_PANIC,
} CgStatus;

typedef enum CgObjective {
  CG_OBJECTIVE_MSE = 0,
  CG_OBJECTIVE_LOGLOSS = 1,
} CgObjective;

// Borrowed feature columns, optional labels and joined side tables.
typedef struct CgDataset CgDataset;

// A trained model.
typedef struct CgModel CgModel;

// Owner of the memory-footprint counters.
typedef struct CgSession CgSession;

// A side table keyed by a unique numeric key, joined to datasets by key.
typedef struct CgSideTable CgSideTable;

// Byte counts per allocation category.
typedef struct CgFootprint {
  uint64_t raw_value_bytes_copied;
  uint64_t bin_cache_bytes;
  uint64_t histogram_bytes;
  uint64_t merge_structure_bytes;
  uint64_t gradient_bytes;
  uint64_t total_library_bytes;
} CgFootprint;

// Training parameters. Start from [`cg_config_default`].
typedef struct CgConfig {
  size_t num_trees;
  double learning_rate;
  size_t max_leaves;
  size_t max_bins;
  size_t min_data_in_leaf;
  double min_split_gain;
  uint32_t t_split;
  bool adaptive_bins;
  enum CgObjective objective;
  uint64_t seed;
  // 0 disables early stopping.
  size_t early_stopping_rounds;
  // Store one bin index per row instead of searching boundaries on read.
  bool bin_cache;
} CgConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Text of the most recent failure on this thread; empty after a success.
// The pointer stays valid until the next call into the library on this thread.
const char *cg_last_error_message(void);

struct CgSession *cg_session_new(void);

// # Safety
// `session` must come from [`cg_session_new`] and not be used afterwards.
void cg_session_free(struct CgSession *session);

// Current footprint, or the breakdown at peak when `peak` is true.
//
// # Safety
// `session` must be a live session handle and `out` writable.
enum CgStatus cg_session_footprint(const struct CgSession *session,
                                   bool peak,
                                   struct CgFootprint *out);

// Register a side table from `n_features` borrowed columns of `n_keys` values each.
//
// # Safety
// `keys` and each `columns[i]` must point to `n_keys` aligned values of `width`
// bytes that outlive the handle; `names` must hold `n_features` C strings.
enum CgStatus cg_side_table_new(const struct CgSession *session,
                                const char *name,
                                const void *keys,
                                size_t n_keys,
                                const void *const *columns,
                                const char *const *names,
                                size_t n_features,
                                size_t width,
                                size_t max_bins,
                                struct CgSideTable **out);

// # Safety
// `table` must come from [`cg_side_table_new`] and not be used afterwards.
void cg_side_table_free(struct CgSideTable *table);

struct CgDataset *cg_dataset_new(void);

// # Safety
// `dataset` must come from [`cg_dataset_new`] and not be used afterwards.
void cg_dataset_free(struct CgDataset *dataset);

// Attach a feature column of `n_rows` values of `width` (4 or 8) bytes.
//
// # Safety
// `data` must point to `n_rows` aligned values that outlive the dataset.
enum CgStatus cg_dataset_add_column(struct CgDataset *dataset,
                                    const char *name,
                                    const void *data,
                                    size_t n_rows,
                                    size_t width);

// # Safety
// As for [`cg_dataset_add_column`].
enum CgStatus cg_dataset_set_labels(struct CgDataset *dataset,
                                    const void *data,
                                    size_t n_rows,
                                    size_t width);

// Join `table` to the dataset through a per-row key column; rows whose key
// has no side row see missing values.
//
// # Safety
// `keys` must point to `n_rows` aligned values; the handles must be live.
enum CgStatus cg_dataset_add_merge(struct CgDataset *dataset,
                                   const struct CgSession *session,
                                   const struct CgSideTable *table,
                                   const void *keys,
                                   size_t n_rows,
                                   size_t width);

struct CgConfig cg_config_default(void);

// Train on `train_set`, optionally monitoring `valid_set` (may be null).
//
// # Safety
// All non-null pointers must be live handles; `out` must be writable.
enum CgStatus cg_train(const struct CgSession *session,
                       const struct CgConfig *config,
                       const struct CgDataset *train_set,
                       const struct CgDataset *valid_set,
                       struct CgModel **out);

// # Safety
// `model` must come from this library and not be used afterwards.
void cg_model_free(struct CgModel *model);

// Number of trees in the model, 0 for a null handle.
//
// # Safety
// `model` must be null or a live model handle.
size_t cg_model_num_trees(const struct CgModel *model);

// Write one raw score per dataset row into `out` (length `out_len`).
// With `probability` set, logistic models write probabilities instead.
//
// # Safety
// `out` must be writable for `out_len` doubles.
enum CgStatus cg_model_predict(const struct CgModel *model,
                               const struct CgDataset *dataset,
                               bool probability,
                               double *out,
                               size_t out_len);

// # Safety
// `model` must be live and `path` a NUL-terminated UTF-8 path.
enum CgStatus cg_model_save(const struct CgModel *model, const char *path);

// # Safety
// `path` must be a NUL-terminated UTF-8 path and `out` writable.
enum CgStatus cg_model_load(const char *path, struct CgModel **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COMPACT_GBDT_H */
