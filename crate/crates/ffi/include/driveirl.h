#ifndef DRIVEIRL_H
#define DRIVEIRL_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DiStatus {
  DI_STATUS_OK = 0,
  DI_STATUS_NULL_POINTER = 1,
  DI_STATUS_INVALID_ARGUMENT = 2,
  DI_STATUS_OUT_OF_BOUNDS = 3,
  DI_STATUS_PLANNING_FAILURE = 4,
  DI_STATUS_COVERAGE = 5,
  DI_STATUS_VALIDATION = 6,
  DI_STATUS_EXPERT_TRUNCATED = 7,
  DI_STATUS_EMPTY_BUFFER = 8,
  DI_STATUS_DIVERGENCE = 9,
  DI_STATUS_IO = 10,
  DI_STATUS_PARSE = 11,
  DI_STATUS_PANIC = 12,
} DiStatus;

typedef enum DiSegmentKind {
  DI_SEGMENT_KIND_STRAIGHT = 0,
  DI_SEGMENT_KIND_CURVY = 1,
} DiSegmentKind;

typedef struct DiBuffer DiBuffer;

typedef struct DiConfig DiConfig;

typedef struct DiOdometry DiOdometry;

typedef struct DiTrack DiTrack;

typedef struct DiWeights DiWeights;

/**
 * Training metrics over the whole replay buffer.
 */
typedef struct DiMetrics {
  double loglik;
  double grad_norm;
  double evd;
  double ed;
} DiMetrics;

/**
 * Driving-style summary for one weight vector.
 */
typedef struct DiStyle {
  size_t cycles;
  double mean_distance;
  double std_distance;
  double mean_expected_distance;
} DiStyle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL
 * terminated, truncated to `len`). Returns the full length including the
 * terminator, or 0 when there is no error.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t di_last_error(char *buf, size_t len);

size_t di_feature_count(void);

/**
 * Static NUL-terminated feature name, or null when out of range.
 */
const char *di_feature_name(size_t index);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum DiStatus di_config_default(struct DiConfig **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DiStatus di_config_load(const char *path, struct DiConfig **out);

/**
 * # Safety
 * `cfg` must come from a `di_config_*` constructor or be null.
 */
void di_config_free(struct DiConfig *cfg);

/**
 * # Safety
 * `cfg` may be null; `out` must be a valid pointer.
 */
enum DiStatus di_track_generate(enum DiSegmentKind kind,
                                double length,
                                uint64_t seed,
                                const struct DiConfig *cfg,
                                struct DiTrack **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string, `cfg` may be null and `out`
 * must be a valid pointer.
 */
enum DiStatus di_track_load(const char *path, const struct DiConfig *cfg, struct DiTrack **out);

/**
 * # Safety
 * `track` must be a live handle and `path` a NUL-terminated string.
 */
enum DiStatus di_track_save(const struct DiTrack *track, const char *path);

/**
 * # Safety
 * `track` must be a live handle or null.
 */
double di_track_length(const struct DiTrack *track);

/**
 * # Safety
 * `track` must come from a `di_track_*` constructor or be null.
 */
void di_track_free(struct DiTrack *track);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum DiStatus di_weights_expert(struct DiWeights **out);

/**
 * Uniform weights in [0.1, 1] from a seeded generator.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum DiStatus di_weights_random(uint64_t seed, struct DiWeights **out);

/**
 * # Safety
 * `theta` must point to `len` doubles and `out` must be a valid pointer.
 */
enum DiStatus di_weights_from_array(const double *theta, size_t len, struct DiWeights **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DiStatus di_weights_load(const char *path, struct DiWeights **out);

/**
 * # Safety
 * `weights` must be a live handle and `path` a NUL-terminated string.
 */
enum DiStatus di_weights_save(const struct DiWeights *weights, const char *path);

/**
 * Copies the weights into `theta`, which must hold `di_feature_count()`
 * doubles.
 *
 * # Safety
 * `weights` must be a live handle and `theta` must point to `len` doubles.
 */
enum DiStatus di_weights_get(const struct DiWeights *weights, double *theta, size_t len);

/**
 * # Safety
 * `weights` must come from a `di_weights_*` constructor or be null.
 */
void di_weights_free(struct DiWeights *weights);

/**
 * Value of a policy with the given feature integral, `-theta . f`.
 *
 * # Safety
 * `features` must point to `len` doubles, `weights` must be a live handle
 * and `out` a valid pointer.
 */
enum DiStatus di_policy_value(const double *features,
                              size_t len,
                              const struct DiWeights *weights,
                              double *out);

/**
 * Maximum-entropy distribution over `n` policies whose feature integrals
 * are stored row-major in `features` (`n * di_feature_count()` doubles).
 *
 * # Safety
 * Array arguments must hold the stated number of elements;
 * `log_partition` may be null.
 */
enum DiStatus di_policy_distribution(const double *features,
                                     size_t n,
                                     const struct DiWeights *weights,
                                     double *probabilities,
                                     double *log_partition);

/**
 * Likelihood gradient of one cycle: expected minus empirical feature
 * integrals, where `demo_flags[i] != 0` marks policy `i` as a
 * demonstration.
 *
 * # Safety
 * Array arguments must hold the stated number of elements.
 */
enum DiStatus di_cycle_gradient(const double *features,
                                const uint8_t *demo_flags,
                                size_t n,
                                const struct DiWeights *weights,
                                double *grad);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DiStatus di_odometry_load(const char *path, struct DiOdometry **out);

/**
 * # Safety
 * `odometry` must be a live handle and `path` a NUL-terminated string.
 */
enum DiStatus di_odometry_save(const struct DiOdometry *odometry, const char *path);

/**
 * # Safety
 * `odometry` must be a live handle or null.
 */
double di_odometry_duration(const struct DiOdometry *odometry);

/**
 * # Safety
 * `odometry` must come from a `di_odometry_*` constructor or be null.
 */
void di_odometry_free(struct DiOdometry *odometry);

/**
 * Drives the planner under `weights` and records its odometry. `cycles`
 * of 0 uses as many as the track allows.
 *
 * # Safety
 * Handles must be live, `cfg` may be null and `out` must be valid.
 */
enum DiStatus di_expert_demo(const struct DiTrack *track,
                             const struct DiWeights *weights,
                             size_t cycles,
                             const struct DiConfig *cfg,
                             uint64_t seed,
                             struct DiOdometry **out);

/**
 * Replays the odometry and stores every cycle with a demonstration.
 * `cycles` of 0 uses all the record covers.
 *
 * # Safety
 * Handles must be live, `cfg` may be null and `out` must be valid.
 */
enum DiStatus di_buffer_build(const struct DiTrack *track,
                              const struct DiOdometry *odometry,
                              const struct DiWeights *weights,
                              size_t cycles,
                              const struct DiConfig *cfg,
                              struct DiBuffer **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DiStatus di_buffer_load(const char *path, struct DiBuffer **out);

/**
 * # Safety
 * `buffer` must be a live handle and `path` a NUL-terminated string.
 */
enum DiStatus di_buffer_save(const struct DiBuffer *buffer, const char *path);

/**
 * # Safety
 * `buffer` must be a live handle or null.
 */
size_t di_buffer_len(const struct DiBuffer *buffer);

/**
 * Mean likelihood gradient over all cycles in the buffer.
 *
 * # Safety
 * Handles must be live and `grad` must hold `di_feature_count()` doubles.
 */
enum DiStatus di_buffer_gradient(const struct DiBuffer *buffer,
                                 const struct DiWeights *weights,
                                 double *grad);

/**
 * # Safety
 * `buffer` must come from a `di_buffer_*` constructor or be null.
 */
void di_buffer_free(struct DiBuffer *buffer);

/**
 * Learns weights from the buffer starting at `init`. `initial` and
 * `final_metrics` may be null.
 *
 * # Safety
 * Handles must be live, `cfg` may be null and `out` must be valid.
 */
enum DiStatus di_train(const struct DiBuffer *buffer,
                       const struct DiWeights *init,
                       const struct DiConfig *cfg,
                       struct DiWeights **out,
                       struct DiMetrics *initial,
                       struct DiMetrics *final_metrics);

/**
 * Replays the odometry under `weights` and summarizes how closely the
 * planner follows it. `cycles` of 0 uses all the record covers.
 *
 * # Safety
 * Handles must be live, `cfg` may be null and `out` must be valid.
 */
enum DiStatus di_evaluate(const struct DiTrack *track,
                          const struct DiOdometry *odometry,
                          const struct DiWeights *weights,
                          size_t cycles,
                          const struct DiConfig *cfg,
                          struct DiStyle *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DRIVEIRL_H */
