#ifndef ADHOC_SV_H
#define ADHOC_SV_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AdhocStatus {
  ADHOC_STATUS_OK = 0,
  ADHOC_STATUS_NULL_POINTER = 1,
  ADHOC_STATUS_INVALID_ARGUMENT = 2,
  ADHOC_STATUS_DIMENSION = 3,
  ADHOC_STATUS_NUMERIC = 4,
  ADHOC_STATUS_IO = 5,
  ADHOC_STATUS_DATA = 6,
  ADHOC_STATUS_CONFIG = 7,
  ADHOC_STATUS_BUFFER_TOO_SMALL = 8,
  ADHOC_STATUS_PANIC = 9,
} AdhocStatus;

/**
 * Per-channel frame features, `C x T x D`.
 */
typedef struct AdhocFeatures AdhocFeatures;

/**
 * Trained model loaded from a checkpoint directory.
 */
typedef struct AdhocModel AdhocModel;

/**
 * Room geometry for one utterance.
 */
typedef struct AdhocScene AdhocScene;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null.
 *
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *adhoc_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *adhoc_version(void);

/**
 * Loads an ADHC feature file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum AdhocStatus adhoc_features_load(const char *path, struct AdhocFeatures **out);

/**
 * Copies `c * t * d` floats laid out channel-major (`[c][t][d]`).
 *
 * # Safety
 * `data` must point to `len` readable floats and `out` must be writable.
 */
enum AdhocStatus adhoc_features_from_f32(size_t c,
                                         size_t t,
                                         size_t d,
                                         const float *data,
                                         size_t len,
                                         struct AdhocFeatures **out);

/**
 * # Safety
 * `features` must be a live handle; the output pointers must be writable.
 */
enum AdhocStatus adhoc_features_dims(const struct AdhocFeatures *features,
                                     size_t *c,
                                     size_t *t,
                                     size_t *d);

/**
 * # Safety
 * `features` must be null or a handle not yet freed.
 */
void adhoc_features_free(struct AdhocFeatures *features);

/**
 * Parses and validates a scene JSON document.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` writable.
 */
enum AdhocStatus adhoc_scene_from_json(const char *json, struct AdhocScene **out);

/**
 * # Safety
 * `scene` must be a live handle and `out` writable.
 */
enum AdhocStatus adhoc_scene_num_nodes(const struct AdhocScene *scene, size_t *out);

/**
 * # Safety
 * `scene` must be null or a handle not yet freed.
 */
void adhoc_scene_free(struct AdhocScene *scene);

/**
 * Loads a model from a checkpoint directory.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` writable.
 */
enum AdhocStatus adhoc_model_load(const char *dir, struct AdhocModel **out);

/**
 * Length of the utterance embedding produced by [`adhoc_model_embed`].
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum AdhocStatus adhoc_model_embedding_dim(const struct AdhocModel *model, size_t *out);

/**
 * Writes the utterance embedding into `out[0..out_len]`.
 *
 * `scene` may be null unless the model selects channels from geometry.
 *
 * # Safety
 * `model` and `features` must be live handles, `scene` null or live, and
 * `out` must have room for `out_len` doubles.
 */
enum AdhocStatus adhoc_model_embed(const struct AdhocModel *model,
                                   const struct AdhocFeatures *features,
                                   const struct AdhocScene *scene,
                                   double *out,
                                   size_t out_len);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void adhoc_model_free(struct AdhocModel *model);

/**
 * Cosine similarity of two vectors of length `len`.
 *
 * # Safety
 * `a` and `b` must point to `len` doubles; `out` must be writable.
 */
enum AdhocStatus adhoc_cosine_score(const double *a, const double *b, size_t len, double *out);

/**
 * Equal error rate of `n` scored trials; `labels[i]` is nonzero for target trials.
 *
 * # Safety
 * `scores` and `labels` must point to `n` elements; outputs must be writable.
 */
enum AdhocStatus adhoc_compute_eer(const double *scores,
                                   const uint8_t *labels,
                                   size_t n,
                                   double *eer,
                                   double *threshold);

/**
 * Distance-ratio channel selection: `out[i]` is 1 when node `i` is kept.
 *
 * `orientation` nonzero also drops nodes behind the speaker; a positive
 * `rho_noise` also drops nodes near the noise source.
 *
 * # Safety
 * `scene` must be a live handle and `out` must have room for `out_len` bytes.
 */
enum AdhocStatus adhoc_prior_mask(const struct AdhocScene *scene,
                                  double rho,
                                  uint8_t orientation,
                                  double rho_noise,
                                  uint8_t *out,
                                  size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADHOC_SV_H */
