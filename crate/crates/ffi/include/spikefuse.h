#ifndef SPIKEFUSE_H
#define SPIKEFUSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SfStatus {
  SF_STATUS_OK = 0,
  SF_STATUS_NULL_POINTER = 1,
  SF_STATUS_INVALID_ARGUMENT = 2,
  SF_STATUS_SHAPE_MISMATCH = 3,
  SF_STATUS_IO = 4,
  SF_STATUS_CORRUPT_CHECKPOINT = 5,
  SF_STATUS_VERSION_MISMATCH = 6,
  SF_STATUS_CONFIG = 7,
  SF_STATUS_BUFFER_TOO_SMALL = 8,
  SF_STATUS_NUMERIC = 9,
  SF_STATUS_PANIC = 10,
  SF_STATUS_INTERNAL = 11,
} SfStatus;

// A loaded model in inference mode.
typedef struct SfModel SfModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. Owned by the library;
// valid until the next failing call on the same thread.
const char *sf_last_error(void);

// Library version as a static NUL-terminated string.
const char *sf_version(void);

// Loads a checkpoint file into a new model handle.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum SfStatus sf_model_load(const char *path, struct SfModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from [`sf_model_load`] and not be used afterwards.
void sf_model_free(struct SfModel *model);

// # Safety
// `model` must be a live handle and `out` writable.
enum SfStatus sf_model_num_classes(const struct SfModel *model, size_t *out);

// Simulation time steps `T`.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum SfStatus sf_model_time_steps(const struct SfModel *model, size_t *out);

// Per-sample audio input shape `[C, H, W]`.
//
// # Safety
// `model` must be a live handle and `out` must hold 3 values.
enum SfStatus sf_model_audio_shape(const struct SfModel *model, size_t *out);

// Per-sample visual input shape `[C, H, W]`.
//
// # Safety
// `model` must be a live handle and `out` must hold 3 values.
enum SfStatus sf_model_visual_shape(const struct SfModel *model, size_t *out);

// Waveform to the model's audio input `[1, H, W]` using the preprocessing
// stored in the checkpoint.
//
// # Safety
// `wave` must hold `wave_len` values and `out` `out_len` values.
enum SfStatus sf_model_audio_input(const struct SfModel *model,
                                   const double *wave,
                                   size_t wave_len,
                                   uint32_t sample_rate,
                                   float *out,
                                   size_t out_len);

// Eval-mode logits `[batch, classes]`.
//
// `audio` is `[batch, C, H, W]`. `visual` is `[batch, C, H, W]` when
// `visual_frames` is 0 (repeated over time), or `[batch, T, C, H, W]` per-step
// frames otherwise. All arrays are row-major.
//
// # Safety
// Pointers must hold the stated number of values.
enum SfStatus sf_model_predict(const struct SfModel *model,
                               size_t batch,
                               const float *audio,
                               size_t audio_len,
                               const float *visual,
                               size_t visual_len,
                               int32_t visual_frames,
                               float *logits,
                               size_t logits_len);

// Log spectrogram resized to `[out_h, out_w]` with default STFT settings
// (22.05 kHz, 512-point FFT, hop 353).
//
// # Safety
// `wave` must hold `wave_len` values and `out` `out_len` values.
enum SfStatus sf_audio_logspec(const double *wave,
                               size_t wave_len,
                               uint32_t sample_rate,
                               size_t out_h,
                               size_t out_w,
                               double *out,
                               size_t out_len);

// LIF spikes for `[steps, width]` input currents starting from rest.
//
// # Safety
// `input` and `spikes` must each hold `steps * width` values.
enum SfStatus sf_lif_forward(const double *input_currents,
                             size_t steps,
                             size_t width,
                             double tau,
                             double v_th,
                             double *spikes);

// Alignment loss between audio and visual features `[T, B, D]`. Features are
// L2-normalized along `D` first.
//
// # Safety
// `audio` and `visual` must each hold `t * b * d` values; `loss` writable.
enum SfStatus sf_sao_loss(const double *audio,
                          const double *visual,
                          size_t t,
                          size_t b,
                          size_t d,
                          double temperature,
                          int32_t symmetric,
                          double *loss);

// Adds Gaussian noise at `snr_db` relative to the power of the whole array.
// `out` may alias `x`.
//
// # Safety
// `x` and `out` must each hold `len` values.
enum SfStatus sf_inject_noise(const double *x,
                              size_t len,
                              double snr_db,
                              uint64_t seed,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPIKEFUSE_H */
