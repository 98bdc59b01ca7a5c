#ifndef NODESPLIT_H
#define NODESPLIT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NsStatus {
  NS_STATUS_OK = 0,
  NS_STATUS_NULL_POINTER = 1,
  NS_STATUS_INVALID_UTF8 = 2,
  NS_STATUS_INVALID_ARGUMENT = 3,
  NS_STATUS_MODEL = 4,
  NS_STATUS_SPLIT = 5,
  NS_STATUS_INFERENCE = 6,
  NS_STATUS_CONFLICT = 7,
  NS_STATUS_BUFFER_TOO_SMALL = 8,
  NS_STATUS_PANIC = 9,
} NsStatus;

typedef enum NsMethod {
  NS_METHOD_AUTO = 0,
  NS_METHOD_DISCRETE = 1,
  NS_METHOD_ONE_SIDED_LOWER = 2,
  NS_METHOD_ONE_SIDED_UPPER = 3,
  NS_METHOD_TWO_SIDED = 4,
  NS_METHOD_KDE = 5,
  NS_METHOD_CHI2 = 6,
  NS_METHOD_MAHALANOBIS = 7,
  NS_METHOD_KDE_MULTIVARIATE = 8,
} NsMethod;

typedef struct NsModel NsModel;

typedef struct NsSplit NsSplit;

typedef struct NsTrace NsTrace;

typedef struct NsSamplerConfig {
  size_t n_chains;
  size_t burn_in;
  /**
   * Post-burn-in iterations per chain, before thinning.
   */
  size_t retained;
  size_t thin;
  uint64_t seed;
} NsSamplerConfig;

typedef struct NsConflict {
  double p_value;
  double mc_se;
  /**
   * Effective sample size, or NaN when not applicable.
   */
  double ess;
  size_t n_draws;
  /**
   * Method actually used (never `Auto`).
   */
  enum NsMethod method;
} NsConflict;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until the
 * next call on the same thread.
 */
const char *ns_last_error(void);

/**
 * Library version as a static string.
 */
const char *ns_version(void);

/**
 * Parses a model from its JSON text.
 *
 * # Safety
 * `json` must be a valid C string and `out` a valid pointer.
 */
enum NsStatus ns_model_from_json(const char *json, struct NsModel **out);

/**
 * Loads a built-in model (`hiv`, `hiv-jeffreys`, `rats`).
 *
 * # Safety
 * `id` must be a valid C string and `out` a valid pointer.
 */
enum NsStatus ns_model_from_corpus(const char *id, struct NsModel **out);

/**
 * Content hash of the model, written as a hex string of 64 characters plus NUL
 * into `buf` of length `len`.
 *
 * # Safety
 * `model` must be a live handle and `buf` valid for `len` bytes.
 */
enum NsStatus ns_model_hash(const struct NsModel *model, char *buf, size_t len);

/**
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void ns_model_free(struct NsModel *model);

/**
 * Splits `model` by `spec`, which is either split-spec JSON or a corpus
 * split id such as `hiv-b:2`.
 *
 * # Safety
 * `model` must be a live handle, `spec` a valid C string, `out` a valid pointer.
 */
enum NsStatus ns_split_new(const struct NsModel *model, const char *spec, struct NsSplit **out);

/**
 * Number of components of δ for this split.
 *
 * # Safety
 * `split` must be a live handle.
 */
size_t ns_split_dim(const struct NsSplit *split);

/**
 * # Safety
 * `split` must be NULL or a handle not yet freed.
 */
void ns_split_free(struct NsSplit *split);

/**
 * Runs the sampler on `model`, or on the split model when `split` is not NULL.
 *
 * # Safety
 * `model` must be a live handle, `split` NULL or live, `out` a valid pointer.
 */
enum NsStatus ns_sample(const struct NsModel *model,
                        const struct NsSplit *split,
                        struct NsSamplerConfig config,
                        struct NsTrace **out);

/**
 * Total retained draws over all chains.
 *
 * # Safety
 * `trace` must be a live handle.
 */
size_t ns_trace_len(const struct NsTrace *trace);

/**
 * Copies column `name`, chains concatenated, into `buf` of length `len`.
 * `written` receives the column length, also when the buffer is too small.
 *
 * # Safety
 * `trace` must be live, `name` a valid C string, `buf` valid for `len`
 * doubles and `written` a valid pointer.
 */
enum NsStatus ns_trace_column(const struct NsTrace *trace,
                              const char *name,
                              double *buf,
                              size_t len,
                              size_t *written);

/**
 * # Safety
 * `trace` must be NULL or a handle not yet freed.
 */
void ns_trace_free(struct NsTrace *trace);

/**
 * Conflict p-value for a trace sampled from `split`. A `bandwidth` ≤ 0
 * selects Silverman's rule for the KDE methods.
 *
 * # Safety
 * `split` and `trace` must be live handles and `out` a valid pointer.
 */
enum NsStatus ns_conflict(const struct NsSplit *split,
                          const struct NsTrace *trace,
                          enum NsMethod method,
                          double bandwidth,
                          struct NsConflict *out);

/**
 * Conflict p-value for raw δ draws: `n` rows of `k` components, row-major,
 * treated as a single chain.
 *
 * # Safety
 * `draws` must be valid for `n * k` doubles and `out` a valid pointer.
 */
enum NsStatus ns_conflict_draws(const double *draws,
                                size_t n,
                                size_t k,
                                enum NsMethod method,
                                double bandwidth,
                                struct NsConflict *out);

/**
 * Conflict for discrete posteriors `pa` and `pb` over the same `n` states.
 *
 * # Safety
 * `pa` and `pb` must be valid for `n` doubles and `out` a valid pointer.
 */
enum NsStatus ns_conflict_discrete(const double *pa,
                                   const double *pb,
                                   size_t n,
                                   struct NsConflict *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NODESPLIT_H */
