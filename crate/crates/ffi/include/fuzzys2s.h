#ifndef FUZZYS2S_H
#define FUZZYS2S_H

/* Generated from the fuzzys2s-ffi crate by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible entry point.
 */
typedef enum Fs2sStatus {
  Fs2sStatus_Ok = 0,
  Fs2sStatus_NullArgument = 1,
  Fs2sStatus_InvalidUtf8 = 2,
  Fs2sStatus_LoadFailed = 3,
  Fs2sStatus_GenerateFailed = 4,
  Fs2sStatus_Panic = 5,
} Fs2sStatus;

/**
 * Opaque handle to a loaded model.
 */
typedef struct Fs2sModel Fs2sModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread; empty after a
 * success. Valid until the next call on the same thread; do not free.
 */
const char *fs2s_last_error_message(void);

/**
 * Library version as a static NUL-terminated string; do not free.
 */
const char *fs2s_version(void);

/**
 * Loads a checkpoint file into a fresh model handle.
 *
 * # Safety
 * `path` must point to a NUL-terminated string. `out` must be a valid
 * location to store the handle; it is set to NULL on failure.
 */
enum Fs2sStatus fs2s_model_load(const char *path, struct Fs2sModel **out);

/**
 * Releases a handle from `fs2s_model_load`. NULL is a no-op.
 *
 * # Safety
 * `model` must be NULL or a handle this library returned, not yet freed.
 */
void fs2s_model_free(struct Fs2sModel *model);

/**
 * Rule count K of a loaded model; 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle from `fs2s_model_load`.
 */
uint32_t fs2s_model_rules(const struct Fs2sModel *model);

/**
 * Runs greedy generation on one input text. On success `*out` holds a
 * NUL-terminated UTF-8 string owned by the caller (release it with
 * `fs2s_string_free`).
 *
 * # Safety
 * `model` must be a live handle; `input` a NUL-terminated string; `out` a
 * valid location, set to NULL on failure.
 */
enum Fs2sStatus fs2s_generate(const struct Fs2sModel *model, const char *input, char **out);

/**
 * Releases a string returned by `fs2s_generate`. NULL is a no-op.
 *
 * # Safety
 * `s` must be NULL or a string this library returned, not yet freed.
 */
void fs2s_string_free(char *s);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* FUZZYS2S_H */
