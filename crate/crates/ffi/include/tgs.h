#ifndef TGS_H
#define TGS_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TgsStatus {
  TGS_STATUS_OK = 0,
  TGS_STATUS_NULL_POINTER = 1,
  TGS_STATUS_INVALID_UTF8 = 2,
  TGS_STATUS_CONFIG = 3,
  TGS_STATUS_VERSION = 4,
  TGS_STATUS_CONTRACT = 5,
  TGS_STATUS_INPUT = 6,
  TGS_STATUS_DATA = 7,
  TGS_STATUS_PARSE = 8,
  TGS_STATUS_GENERATION = 9,
  TGS_STATUS_IO = 10,
  TGS_STATUS_SHAPE = 11,
  TGS_STATUS_NUMERIC_INPUT = 12,
  TGS_STATUS_LENGTH = 13,
  TGS_STATUS_PANIC = 14,
} TgsStatus;

/**
 * A model with its tokenizer.
 */
typedef struct TgsModel TgsModel;

/**
 * A generated GUI screen with its element tree and raster.
 */
typedef struct TgsScene TgsScene;

/**
 * Pixel box, `[x_left, y_top, x_right, y_bottom)`.
 */
typedef struct TgsBox {
  int64_t x_left;
  int64_t y_top;
  int64_t x_right;
  int64_t y_bottom;
} TgsBox;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if it succeeded. Free with [`tgs_string_free`].
 */
char *tgs_last_error_message(void);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void tgs_string_free(char *s);

/**
 * Library version as a static string.
 */
const char *tgs_version(void);

/**
 * # Safety
 * Pointers must be valid or null.
 */
enum TgsStatus tgs_iou(const struct TgsBox *a, const struct TgsBox *b, double *out);

/**
 * Pixel box to the 0..1000 grid of a `width x height` screen.
 *
 * # Safety
 * Pointers must be valid or null.
 */
enum TgsStatus tgs_scale_box(const struct TgsBox *b,
                             uint32_t width,
                             uint32_t height,
                             struct TgsBox *out);

/**
 * Box area as a percentage of the screen.
 *
 * # Safety
 * Pointers must be valid or null.
 */
enum TgsStatus tgs_small_object_ratio(const struct TgsBox *b,
                                      uint32_t width,
                                      uint32_t height,
                                      double *out);

/**
 * # Safety
 * Strings must be NUL-terminated or null; `out` valid or null.
 */
enum TgsStatus tgs_token_f1(const char *pred, const char *gold, double *out);

/**
 * # Safety
 * Strings must be NUL-terminated or null; `out` valid or null.
 */
enum TgsStatus tgs_rouge_l(const char *pred, const char *gold, double *out);

/**
 * Generate a screen with the default generator settings.
 *
 * # Safety
 * `out` must be valid or null.
 */
enum TgsStatus tgs_scene_generate(uint64_t seed, struct TgsScene **out);

/**
 * # Safety
 * `scene` must come from [`tgs_scene_generate`] or be null.
 */
void tgs_scene_free(struct TgsScene *scene);

/**
 * # Safety
 * Pointers must be valid or null.
 */
enum TgsStatus tgs_scene_size(const struct TgsScene *scene, uint32_t *width, uint32_t *height);

/**
 * Number of elements in the tree, root included.
 *
 * # Safety
 * Pointers must be valid or null.
 */
enum TgsStatus tgs_scene_node_count(const struct TgsScene *scene, size_t *out);

/**
 * Element tree as JSON. Free the string with [`tgs_string_free`].
 *
 * # Safety
 * Pointers must be valid or null.
 */
enum TgsStatus tgs_scene_to_json(const struct TgsScene *scene, char **out);

/**
 * Fresh model with the default configuration.
 *
 * # Safety
 * `out` must be valid or null.
 */
enum TgsStatus tgs_model_new(uint64_t seed, struct TgsModel **out);

/**
 * # Safety
 * Pointers must be valid or null; `path` NUL-terminated.
 */
enum TgsStatus tgs_model_load(const char *path, struct TgsModel **out);

/**
 * # Safety
 * Pointers must be valid or null; `path` NUL-terminated.
 */
enum TgsStatus tgs_model_save(const struct TgsModel *model, const char *path);

/**
 * # Safety
 * `model` must come from this library or be null.
 */
void tgs_model_free(struct TgsModel *model);

/**
 * Greedy answer to `prompt` about `scene`. Free the string with [`tgs_string_free`].
 *
 * # Safety
 * Pointers must be valid or null; `prompt` NUL-terminated.
 */
enum TgsStatus tgs_model_answer(const struct TgsModel *model,
                                const struct TgsScene *scene,
                                uint32_t max_tiles,
                                const char *prompt,
                                char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TGS_H */
