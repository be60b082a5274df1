#ifndef MEMTRACK_H
#define MEMTRACK_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MtStatus {
  MT_STATUS_OK = 0,
  MT_STATUS_NULL_POINTER = 1,
  MT_STATUS_INVALID_ARGUMENT = 2,
  MT_STATUS_CONFIG = 3,
  MT_STATUS_SCHEMA = 4,
  MT_STATUS_DESCRIPTOR = 5,
  MT_STATUS_SEQUENCING = 6,
  MT_STATUS_IO = 7,
  MT_STATUS_UNDEFINED_METRIC = 8,
  MT_STATUS_INTERNAL = 9,
  MT_STATUS_PANIC = 10,
} MtStatus;

/**
 * Opaque engine handle.
 */
typedef struct MtEngine MtEngine;

/**
 * Engine settings. Start from [`mt_config_default`] and override fields.
 */
typedef struct MtConfig {
  double rho_bar;
  double alpha;
  double e_bar;
  size_t capacity;
  double tau_abs;
  uint32_t confirm_consecutive;
  uint64_t confirm_window;
  /**
   * Descriptor dimension. May be 0 when loading a snapshot.
   */
  size_t dim;
  uint64_t seed;
  bool normalize;
} MtConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Default engine settings, with `dim` left at 0.
 */
struct MtConfig mt_config_default(void);

/**
 * Message for the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *mt_last_error_message(void);

/**
 * Creates an engine with an empty memory. `config->dim` must be positive.
 *
 * # Safety
 * `config` must be null or point to a valid `MtConfig`; `out` must be null
 * or writable.
 */
enum MtStatus mt_engine_new(const struct MtConfig *config, struct MtEngine **out);

/**
 * Creates an engine from a memory snapshot file. A zero `config->dim` is
 * taken from the snapshot.
 *
 * # Safety
 * As for [`mt_engine_new`]; `path` must be a nul-terminated string.
 */
enum MtStatus mt_engine_load_snapshot(const struct MtConfig *config,
                                      const char *path,
                                      struct MtEngine **out);

/**
 * Releases an engine. Null is ignored.
 *
 * # Safety
 * `engine` must be null or a handle returned by this library and not yet freed.
 */
void mt_engine_free(struct MtEngine *engine);

/**
 * Processes one frame of `count` descriptors stored row-major in
 * `descriptors` (`count * dim` values). Writes one identity per observation
 * to `out_ids`, or -1 when the observation was left unassigned.
 *
 * # Safety
 * `descriptors` must hold `count * dim` doubles and `out_ids` at least
 * `out_len` slots. Either may be null when `count` is 0.
 */
enum MtStatus mt_engine_process_frame(struct MtEngine *engine,
                                      uint64_t frame,
                                      const double *descriptors,
                                      size_t count,
                                      int64_t *out_ids,
                                      size_t out_len);

/**
 * Number of stored exemplars.
 *
 * # Safety
 * `engine` must be a live handle; `out` must be writable.
 */
enum MtStatus mt_engine_memory_len(const struct MtEngine *engine, size_t *out);

/**
 * Descriptor dimension the engine expects.
 *
 * # Safety
 * `engine` must be a live handle; `out` must be writable.
 */
enum MtStatus mt_engine_dimension(const struct MtEngine *engine, size_t *out);

/**
 * Writes the memory to a snapshot file.
 *
 * # Safety
 * `engine` must be a live handle; `path` a nul-terminated string.
 */
enum MtStatus mt_engine_save_snapshot(const struct MtEngine *engine, const char *path);

/**
 * Decay factor for a match with nearest distance `d1` and second-nearest
 * distance `d2`.
 *
 * # Safety
 * `out` must be writable.
 */
enum MtStatus mt_compute_eta(double d1, double d2, double rho_bar, double alpha, double *out);

/**
 * Tracking accuracy from accumulated counts.
 *
 * # Safety
 * `out` must be writable.
 */
enum MtStatus mt_mota(uint64_t gt,
                      uint64_t false_negatives,
                      uint64_t false_positives,
                      uint64_t id_switches,
                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEMTRACK_H */
