#ifndef FLOODAID_H
#define FLOODAID_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. Zero is success.
typedef enum FaStatus {
  FA_STATUS_OK = 0,
  FA_STATUS_NULL_POINTER = 1,
  FA_STATUS_INVALID_ARGUMENT = 2,
  FA_STATUS_IO = 3,
  FA_STATUS_DATA = 4,
  FA_STATUS_CONFIG = 5,
  FA_STATUS_NUMERIC = 6,
  FA_STATUS_INTEGRITY = 7,
  FA_STATUS_PANIC = 8,
} FaStatus;

// Which network to train.
typedef enum FaVariant {
  FA_VARIANT_BASELINE = 0,
  FA_VARIANT_FAIR = 1,
} FaVariant;

// Opaque dataset handle.
typedef struct FaDataset FaDataset;

// Opaque trained-model handle.
typedef struct FaModel FaModel;

// Training options; obtain defaults from [`fa_train_options_default`].
typedef struct FaTrainOptions {
  enum FaVariant variant;
  double lambda;
  size_t epochs;
  size_t batch_size;
  double learning_rate;
  uint64_t seed;
} FaTrainOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failure on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *fa_last_error(void);

// Library version as a static NUL-terminated string.
const char *fa_version(void);

// Generates the default synthetic dataset with the given size and seed.
// Zero for `n_upazilas` or `n_districts` keeps the default.
//
// # Safety
// `out` must be a valid pointer to writable storage for a handle.
enum FaStatus fa_dataset_generate(uint64_t seed,
                                  size_t n_upazilas,
                                  size_t n_districts,
                                  struct FaDataset **out);

// Loads a dataset CSV.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum FaStatus fa_dataset_load_csv(const char *path, struct FaDataset **out);

// Writes a dataset as CSV.
//
// # Safety
// `dataset` must come from this library; `path` must be NUL-terminated.
enum FaStatus fa_dataset_save_csv(const struct FaDataset *dataset, const char *path);

// Number of rows, or 0 for a null handle.
//
// # Safety
// `dataset` must be null or come from this library.
size_t fa_dataset_len(const struct FaDataset *dataset);

// Copies the damage targets into `out` (`len` must equal the row count).
//
// # Safety
// `dataset` must come from this library; `out` must hold `len` doubles.
enum FaStatus fa_dataset_targets(const struct FaDataset *dataset, double *out, size_t len);

// # Safety
// `dataset` must be null or an unfreed handle from this library.
void fa_dataset_free(struct FaDataset *dataset);

struct FaTrainOptions fa_train_options_default(void);

// Trains on every row of `dataset`.
//
// # Safety
// `dataset` must come from this library; `options` may be null for the
// defaults; `out` must be writable.
enum FaStatus fa_train(const struct FaDataset *dataset,
                       const struct FaTrainOptions *options,
                       struct FaModel **out);

// Predicted damage (USD M) per row, in row order.
//
// # Safety
// Handles must come from this library; `out` must hold `len` doubles.
enum FaStatus fa_model_predict(const struct FaModel *model,
                               const struct FaDataset *dataset,
                               double *out,
                               size_t len);

// Priority scores and 1-based ranks per row, in row order. Either output
// may be null.
//
// # Safety
// Handles must come from this library; non-null outputs must hold `len`
// values.
enum FaStatus fa_model_priority(const struct FaModel *model,
                                const struct FaDataset *dataset,
                                double *scores,
                                size_t *ranks,
                                size_t len);

// Total trainable parameters, or 0 for a null handle.
//
// # Safety
// `model` must be null or come from this library.
size_t fa_model_parameter_count(const struct FaModel *model);

// Saves a checkpoint that the command line tool can also read.
//
// # Safety
// `model` must come from this library; `path` must be NUL-terminated.
enum FaStatus fa_model_save(const struct FaModel *model, const char *path);

// Loads a checkpoint, verifying its integrity hash.
//
// # Safety
// `path` must be NUL-terminated; `out` must be writable.
enum FaStatus fa_model_load(const char *path, struct FaModel **out);

// # Safety
// `model` must be null or an unfreed handle from this library.
void fa_model_free(struct FaModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOODAID_H */
