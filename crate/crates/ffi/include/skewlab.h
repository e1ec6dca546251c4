#ifndef SKEWLAB_H
#define SKEWLAB_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every function.
 */
typedef enum SkewlabStatus {
  SKEWLAB_STATUS_OK = 0,
  SKEWLAB_STATUS_NULL_ARGUMENT = 1,
  SKEWLAB_STATUS_INVALID_UTF8 = 2,
  SKEWLAB_STATUS_CONFIG = 3,
  SKEWLAB_STATUS_CERTIFICATE_FAILURE = 4,
  SKEWLAB_STATUS_BUDGET_EXHAUSTED = 5,
  SKEWLAB_STATUS_IO = 6,
  SKEWLAB_STATUS_CORRUPT_CHECKPOINT = 7,
  SKEWLAB_STATUS_INVALID_PARAMS = 8,
  SKEWLAB_STATUS_PANIC = 9,
  SKEWLAB_STATUS_OTHER = 10,
} SkewlabStatus;

/**
 * A stage map, possibly a rescaled lift, ready for iteration.
 */
typedef struct SkewlabMap SkewlabMap;

/**
 * A construction state (all completed stages).
 */
typedef struct SkewlabState SkewlabState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *skewlab_version(void);

/**
 * Message of the last failure on this thread (empty after a success). The
 * pointer stays valid until the next call on the same thread.
 */
const char *skewlab_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void skewlab_string_free(char *s);

/**
 * Runs the construction. `config_json` may be null for the default
 * configuration. When `checkpoint_dir` is non-null a `stage_k.json`
 * checkpoint is written after every stage.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum SkewlabStatus skewlab_construct(const char *config_json,
                                     const char *checkpoint_dir,
                                     struct SkewlabState **out);

/**
 * Loads a `stage_k.json` checkpoint.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum SkewlabStatus skewlab_state_load(const char *path, struct SkewlabState **out);

/**
 * Writes the state as `dir/stage_k.json`.
 *
 * # Safety
 * `state` must be a live handle; `dir` must be NUL-terminated.
 */
enum SkewlabStatus skewlab_state_save(const struct SkewlabState *state, const char *dir);

/**
 * # Safety
 * `state` must be null or a handle that has not been freed.
 */
void skewlab_state_free(struct SkewlabState *state);

/**
 * Number of completed stages.
 *
 * # Safety
 * `state` must be a live handle; `out` must be writable.
 */
enum SkewlabStatus skewlab_state_completed(const struct SkewlabState *state, uint64_t *out);

/**
 * Summary rows as a JSON array; free with `skewlab_string_free`.
 *
 * # Safety
 * `state` must be a live handle; `out` must be writable.
 */
enum SkewlabStatus skewlab_state_summary_json(const struct SkewlabState *state, char **out);

/**
 * All certificates as a JSON array; free with `skewlab_string_free`.
 *
 * # Safety
 * `state` must be a live handle; `out` must be writable.
 */
enum SkewlabStatus skewlab_state_certificates_json(const struct SkewlabState *state, char **out);

/**
 * Capt report for completed stage `stage` as JSON.
 *
 * # Safety
 * `state` must be a live handle; `out` must be writable.
 */
enum SkewlabStatus skewlab_state_capt_json(const struct SkewlabState *state,
                                           uint64_t stage,
                                           uint64_t orbit_n,
                                           char **out);

/**
 * The totally irrational map of completed stage `stage` (0 = latest), or its
 * rescaled lift to the `(l, m)` cover with deck index `(s1, s2)`; `l = m = 1`
 * gives the map itself.
 *
 * # Safety
 * `state` must be a live handle; `out` must be writable.
 */
enum SkewlabStatus skewlab_state_map(const struct SkewlabState *state,
                                     uint64_t stage,
                                     uint32_t l,
                                     uint32_t m,
                                     uint32_t s1,
                                     uint32_t s2,
                                     struct SkewlabMap **out);

/**
 * # Safety
 * `map` must be null or a handle that has not been freed.
 */
void skewlab_map_free(struct SkewlabMap *map);

/**
 * Evaluates the map once at `(x, y)`.
 *
 * # Safety
 * `map` must be a live handle; `out_xy` must hold 2 doubles.
 */
enum SkewlabStatus skewlab_map_eval(const struct SkewlabMap *map,
                                    double x,
                                    double y,
                                    double *out_xy);

/**
 * Writes `n` orbit points as interleaved `x, y` into `out_xy` (2n doubles).
 * For conjugated maps the start is given in rotation coordinates.
 *
 * # Safety
 * `map` must be a live handle; `out_xy` must hold `2n` doubles.
 */
enum SkewlabStatus skewlab_map_orbit(const struct SkewlabMap *map,
                                     double x,
                                     double y,
                                     uint64_t n,
                                     double *out_xy);

/**
 * `a_N(θ)` for the observable `e^{2πi(kx+ly)}` along one orbit.
 *
 * # Safety
 * `map` must be a live handle; `out` must be writable.
 */
enum SkewlabStatus skewlab_map_amplitude(const struct SkewlabMap *map,
                                         int64_t k,
                                         int64_t l,
                                         double theta,
                                         double x,
                                         double y,
                                         uint64_t n,
                                         double *out);

/**
 * Base rotation number of the map.
 *
 * # Safety
 * `map` must be a live handle; `out` must be writable.
 */
enum SkewlabStatus skewlab_map_base_rotation(const struct SkewlabMap *map, double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* SKEWLAB_H */
