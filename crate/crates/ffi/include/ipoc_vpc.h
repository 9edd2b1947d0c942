#ifndef IPOC_VPC_H
#define IPOC_VPC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IpocStatus {
  IPOC_STATUS_OK = 0,
  IPOC_STATUS_NULL_POINTER = 1,
  IPOC_STATUS_INVALID_ARGUMENT = 2,
  IPOC_STATUS_DOMAIN = 3,
  IPOC_STATUS_WEIGHT = 4,
  IPOC_STATUS_NON_CONVERGENCE = 5,
  IPOC_STATUS_SEPARATION = 6,
  IPOC_STATUS_PARSE = 7,
  IPOC_STATUS_IO = 8,
  IPOC_STATUS_FORMAT = 9,
  IPOC_STATUS_BUFFER_TOO_SMALL = 10,
  IPOC_STATUS_PANIC = 11,
} IpocStatus;

typedef enum IpocWeightForm {
  IPOC_WEIGHT_FORM_SIMPLIFIED = 0,
  IPOC_WEIGHT_FORM_FULL = 1,
} IpocWeightForm;

typedef enum IpocAlgorithm {
  IPOC_ALGORITHM_STANDARD = 0,
  IPOC_ALGORITHM_STANDARD_CENSORED = 1,
  IPOC_ALGORITHM_IPOC = 2,
  IPOC_ALGORITHM_MARGINAL = 3,
} IpocAlgorithm;

typedef enum IpocSeries {
  IPOC_SERIES_MEAN = 0,
  IPOC_SERIES_LOWER = 1,
  IPOC_SERIES_UPPER = 2,
  IPOC_SERIES_OBSERVED = 3,
} IpocSeries;

typedef struct IpocDataset IpocDataset;

typedef struct IpocModels IpocModels;

typedef struct IpocVpcResult IpocVpcResult;

// VPC settings. Zero `workers` uses the shared pool; non-positive
// `max_weight` disables the weight cap.
typedef struct IpocVpcOptions {
  uintptr_t replicates;
  uint64_t seed;
  uintptr_t grid_size;
  double lower_quantile;
  double upper_quantile;
  enum IpocWeightForm weight_form;
  double max_weight;
  uintptr_t workers;
} IpocVpcOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Writes the calling thread's last error message into `buf`. Returns the
// buffer size needed; nothing is written when `len` is smaller than that.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
uintptr_t ipoc_last_error_message(char *buf, uintptr_t len);

// Reads a dataset CSV (`subject_id,time,event,<covariates>`).
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum IpocStatus ipoc_dataset_read_csv(const char *path, struct IpocDataset **out);

// Generates a synthetic study from a key=value spec; null `spec` selects
// the built-in default study.
//
// # Safety
// `spec` must be null or NUL-terminated; `out` must be writable.
enum IpocStatus ipoc_dataset_generate(const char *spec, struct IpocDataset **out);

// # Safety
// `data` must be a live dataset handle or null.
uintptr_t ipoc_dataset_len(const struct IpocDataset *data);

// # Safety
// `data` must be a live dataset handle; `path` NUL-terminated.
enum IpocStatus ipoc_dataset_write_csv(const struct IpocDataset *data, const char *path);

// # Safety
// `data` must be null or a handle not yet freed.
void ipoc_dataset_free(struct IpocDataset *data);

// Fits the Cox event model on every covariate column and the censoring model.
//
// # Safety
// `data` must be a live dataset handle; `out` must be writable.
enum IpocStatus ipoc_models_fit(const struct IpocDataset *data, struct IpocModels **out);

// # Safety
// `path` must be NUL-terminated; `out` must be writable.
enum IpocStatus ipoc_models_read_json(const char *path, struct IpocModels **out);

// # Safety
// `models` must be a live handle; `path` NUL-terminated.
enum IpocStatus ipoc_models_write_json(const struct IpocModels *models, const char *path);

// Number of Cox coefficients.
//
// # Safety
// `models` must be a live handle or null.
uintptr_t ipoc_models_dim(const struct IpocModels *models);

// Copies the coefficients into `out`, which must hold `ipoc_models_dim` values.
//
// # Safety
// `models` must be a live handle; `out` valid for `len` doubles.
enum IpocStatus ipoc_models_beta(const struct IpocModels *models, double *out, uintptr_t len);

// Conditional survival `exp(−Λ₀(t)·exp(βᵀy))` for covariates `y`.
//
// # Safety
// `models` must be a live handle; `y` valid for `n` doubles; `out` writable.
enum IpocStatus ipoc_models_cond_survival(const struct IpocModels *models,
                                          const double *y,
                                          uintptr_t n,
                                          double t,
                                          double *out);

// # Safety
// `models` must be null or a handle not yet freed.
void ipoc_models_free(struct IpocModels *models);

struct IpocVpcOptions ipoc_vpc_default_options(void);

// Runs a VPC. `stratify_by` names a covariate column, or is null for a
// single stratum.
//
// # Safety
// Handles must be live; `options` readable; `stratify_by` null or
// NUL-terminated; `out` writable.
enum IpocStatus ipoc_vpc_run(const struct IpocDataset *data,
                             const struct IpocModels *models,
                             enum IpocAlgorithm algorithm,
                             const struct IpocVpcOptions *options,
                             const char *stratify_by,
                             struct IpocVpcResult **out);

// # Safety
// `result` must be a live handle or null.
uintptr_t ipoc_vpc_stratum_count(const struct IpocVpcResult *result);

// # Safety
// `result` must be a live handle or null.
uintptr_t ipoc_vpc_grid_len(const struct IpocVpcResult *result);

// Copies the evaluation grid into `out`.
//
// # Safety
// `result` must be a live handle; `out` valid for `len` doubles.
enum IpocStatus ipoc_vpc_grid(const struct IpocVpcResult *result, double *out, uintptr_t len);

// Copies the label of stratum `index` (for example `placebo=1`) into `buf`.
// Returns the size needed including the terminator, or 0 for a bad index.
//
// # Safety
// `result` must be a live handle; `buf` null or valid for `len` bytes.
uintptr_t ipoc_vpc_stratum_label(const struct IpocVpcResult *result,
                                 uintptr_t index,
                                 char *buf,
                                 uintptr_t len);

// Copies one band series of stratum `index` on the grid into `out`.
//
// # Safety
// `result` must be a live handle; `out` valid for `len` doubles.
enum IpocStatus ipoc_vpc_series(const struct IpocVpcResult *result,
                                uintptr_t index,
                                enum IpocSeries series,
                                double *out,
                                uintptr_t len);

// Writes the band CSV (`stratum,time,mean,lower,upper,observed_km`).
//
// # Safety
// `result` must be a live handle; `path` NUL-terminated.
enum IpocStatus ipoc_vpc_write_csv(const struct IpocVpcResult *result, const char *path);

// # Safety
// `result` must be null or a handle not yet freed.
void ipoc_vpc_free(struct IpocVpcResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IPOC_VPC_H */
