#ifndef CED_H
#define CED_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  CED_STATUS_OK = 0,
  CED_STATUS_NULL_POINTER = 1,
  CED_STATUS_INVALID_ARGUMENT = 2,
  CED_STATUS_IO = 3,
  CED_STATUS_CHECKPOINT = 4,
  CED_STATUS_DIMENSION = 5,
  CED_STATUS_INPUT_TOO_SHORT = 6,
  CED_STATUS_NUMERIC = 7,
  CED_STATUS_INSUFFICIENT_DATA = 8,
  CED_STATUS_UNDEFINED_CORRELATION = 9,
  CED_STATUS_PANIC = 10,
} CedStatus;

/**
 * Opaque model handle.
 */
typedef struct CedModelHandle CedModelHandle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *ced_last_error_message(void);

/**
 * Loads a checkpoint file. The handle must be released with [`ced_model_free`].
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
CedStatus ced_model_load(const char *path, CedModelHandle **out);

/**
 * Builds a freshly initialised model from a JSON model config (NULL or
 * `"{}"` for defaults).
 *
 * # Safety
 * `config_json` must be NULL or NUL-terminated; `out` must be writable.
 */
CedStatus ced_model_new(const char *config_json, CedModelHandle **out);

/**
 * # Safety
 * `handle` must be NULL or a handle from this library not yet freed.
 */
void ced_model_free(CedModelHandle *handle);

/**
 * # Safety
 * `handle` must be a live handle; `out` must be writable.
 */
CedStatus ced_model_param_count(const CedModelHandle *handle, size_t *out);

/**
 * Feature dimension the model expects.
 *
 * # Safety
 * `handle` must be a live handle; `out` must be writable.
 */
CedStatus ced_model_input_dim(const CedModelHandle *handle, size_t *out);

/**
 * Length of each pooled embedding.
 *
 * # Safety
 * `handle` must be a live handle; `out` must be writable.
 */
CedStatus ced_model_embedding_dim(const CedModelHandle *handle, size_t *out);

/**
 * Real/fake logit of a turn pair (positive means "real").
 *
 * # Safety
 * `lead` and `resp` must hold `frames × dim` doubles; `out` must be writable.
 */
CedStatus ced_pair_logit(const CedModelHandle *handle,
                         const double *lead,
                         size_t lead_frames,
                         const double *resp,
                         size_t resp_frames,
                         size_t dim,
                         double *out);

/**
 * CED of a turn pair with smooth-L1 transition `beta`.
 *
 * # Safety
 * As [`ced_pair_logit`].
 */
CedStatus ced_pair_distance(const CedModelHandle *handle,
                            const double *lead,
                            size_t lead_frames,
                            const double *resp,
                            size_t resp_frames,
                            size_t dim,
                            double beta,
                            double *out);

/**
 * Pooled cross-encoder embeddings of both turns; each output buffer must
 * hold `len` doubles, where `len` equals the embedding dimension.
 *
 * # Safety
 * As [`ced_pair_logit`]; `pooled_lead` and `pooled_resp` must hold `len` doubles.
 */
CedStatus ced_pair_embeddings(const CedModelHandle *handle,
                              const double *lead,
                              size_t lead_frames,
                              const double *resp,
                              size_t resp_frames,
                              size_t dim,
                              double *pooled_lead,
                              double *pooled_resp,
                              size_t len);

/**
 * # Safety
 * `u` and `v` must hold `len` doubles; `out` must be writable.
 */
CedStatus ced_smooth_l1(const double *u, const double *v, size_t len, double beta, double *out);

/**
 * Pearson r and its two-sided p-value.
 *
 * # Safety
 * `xs` and `ys` must hold `len` doubles; `rho` and `p_value` must be writable.
 */
CedStatus ced_pearson(const double *xs, const double *ys, size_t len, double *rho, double *p_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CED_H */
