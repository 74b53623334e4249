#pragma once

/* Generated with cbindgen:0.26.0 */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum PfcaStatus {
  PFCA_STATUS_OK = 0,
  /**
   * Bad argument: null pointer, unknown name, malformed shape.
   */
  PFCA_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Numerical failure (non-finite values).
   */
  PFCA_STATUS_NUMERIC = 2,
  /**
   * Valid request the build does not support.
   */
  PFCA_STATUS_UNSUPPORTED = 3,
  /**
   * I/O or file-format failure.
   */
  PFCA_STATUS_IO = 4,
  /**
   * Internal error; consult `pfca_last_error`.
   */
  PFCA_STATUS_INTERNAL = 5,
} PfcaStatus;

/**
 * Opaque model handle.
 */
typedef struct PfcaModel PfcaModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the message of the most recent error on this thread into `buf`
 * (NUL-terminated, truncated to `len`); returns the full message length.
 *
 * # Safety
 * `buf` must point to `len` writable bytes, or be null (query mode).
 */
size_t pfca_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pfca_version(void);

/**
 * Builds a freshly initialized model. `family` is one of msrresnet,
 * resnet18, resnet50, resnet101; `attention` one of none, pfca, ca, pa.
 *
 * # Safety
 * `family` and `attention` must be NUL-terminated strings; `out` must be
 * a valid pointer. A non-null result handle must be released with
 * `pfca_model_free`.
 */
enum PfcaStatus pfca_model_new(const char *family,
                               const char *attention,
                               uint64_t seed,
                               struct PfcaModel **out);

/**
 * Builds a super-resolution model of custom depth/width (upscale 4).
 *
 * # Safety
 * As `pfca_model_new`.
 */
enum PfcaStatus pfca_model_new_sr(size_t blocks,
                                  size_t width,
                                  const char *attention,
                                  uint64_t seed,
                                  struct PfcaModel **out);

/**
 * Restores the model stored in a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid.
 */
enum PfcaStatus pfca_model_load(const char *path, struct PfcaModel **out);

/**
 * Releases a model handle. Null is a no-op.
 *
 * # Safety
 * `model` must be a handle produced by this library, released once.
 */
void pfca_model_free(struct PfcaModel *model);

/**
 * Trainable parameter count of the model; 0 for a null handle.
 *
 * # Safety
 * `model` must be a live handle or null.
 */
uint64_t pfca_model_param_count(const struct PfcaModel *model);

/**
 * Multiply-accumulate count on an N×C×H×W input under the convolution/
 * linear MAC convention (elementwise work excluded).
 *
 * # Safety
 * `model` must be a live handle; `out_macs` must be writable.
 */
enum PfcaStatus pfca_model_macs(const struct PfcaModel *model,
                                size_t n,
                                size_t c,
                                size_t h,
                                size_t w,
                                uint64_t *out_macs);

/**
 * Output shape for an N×C×H×W input, written into `dims_out[4]`.
 *
 * # Safety
 * `model` live; `dims_out` must point to four writable usize slots.
 */
enum PfcaStatus pfca_model_output_shape(const struct PfcaModel *model,
                                        size_t n,
                                        size_t c,
                                        size_t h,
                                        size_t w,
                                        size_t *dims_out);

/**
 * Runs inference on a row-major N,C,H,W f32 buffer of `input_len`
 * elements, writing the output into `output` (`output_len` elements,
 * sized per `pfca_model_output_shape`). Classifier outputs are logits.
 *
 * # Safety
 * Buffers must match the stated lengths; the handle must be live.
 */
enum PfcaStatus pfca_model_forward(struct PfcaModel *model,
                                   const float *input,
                                   size_t input_len,
                                   size_t n,
                                   size_t c,
                                   size_t h,
                                   size_t w,
                                   float *output,
                                   size_t output_len);

/**
 * Applies the parameter-free channel attention operator in place on a
 * row-major N,C,H,W f32 buffer.
 *
 * # Safety
 * `data` must point to `len` = N·C·H·W writable f32 values.
 */
enum PfcaStatus pfca_attention_forward(float *data,
                                       size_t len,
                                       size_t n,
                                       size_t c,
                                       size_t h,
                                       size_t w,
                                       double lambda);

/**
 * Peak signal-to-noise ratio between two h×w f64 planes on a `peak`
 * scale; identical planes produce +inf.
 *
 * # Safety
 * `a` and `b` must each point to h·w readable f64 values.
 */
enum PfcaStatus pfca_psnr(const double *a,
                          const double *b,
                          size_t h,
                          size_t w,
                          double peak,
                          double *out);

/**
 * Structural similarity between two h×w f64 planes (11×11 Gaussian
 * window); requires h, w >= 11.
 *
 * # Safety
 * As `pfca_psnr`.
 */
enum PfcaStatus pfca_ssim(const double *a,
                          const double *b,
                          size_t h,
                          size_t w,
                          double peak,
                          double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus
