#ifndef HSFM_SIGNN_H
#define HSFM_SIGNN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HsfmStatus {
  HSFM_STATUS_OK = 0,
  HSFM_STATUS_NULL_POINTER = 1,
  HSFM_STATUS_INVALID_ARGUMENT = 2,
  HSFM_STATUS_DIMENSION = 3,
  HSFM_STATUS_NOT_POSITIVE_DEFINITE = 4,
  HSFM_STATUS_NUMERICAL = 5,
  HSFM_STATUS_PARSE = 6,
  HSFM_STATUS_IO = 7,
  HSFM_STATUS_CONFIG = 8,
  HSFM_STATUS_DATA = 9,
  HSFM_STATUS_BUFFER_TOO_SMALL = 10,
  HSFM_STATUS_PANIC = 11,
} HsfmStatus;

/**
 * Covariance network weights (opaque).
 */
typedef struct HsfmCovNet HsfmCovNet;

/**
 * Model parameters (opaque).
 */
typedef struct HsfmParamsHandle HsfmParamsHandle;

/**
 * Scene under construction (opaque).
 */
typedef struct HsfmScene HsfmScene;

typedef struct HsfmAgentState {
  double x;
  double y;
  double vx;
  double vy;
  double heading;
  double angular_rate;
} HsfmAgentState;

/**
 * Initial uncertainty of the ego agent.
 */
typedef struct HsfmInitNoise {
  double pos_std;
  double vel_std;
  double heading_std;
} HsfmInitNoise;

/**
 * Mean and 2x2 position covariance at one step.
 */
typedef struct HsfmPrediction {
  double mean_x;
  double mean_y;
  double cov_xx;
  double cov_xy;
  double cov_yy;
} HsfmPrediction;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message (NUL-terminated, possibly
 * truncated) into `buf` and returns its full length in bytes without the
 * terminator. Pass a null `buf` to query the length.
 *
 * # Safety
 * `buf` must be null or valid for `len` writable bytes.
 */
uintptr_t hsfm_last_error_message(char *buf, uintptr_t len);

/**
 * Default parameters; free with [`hsfm_params_free`].
 */
struct HsfmParamsHandle *hsfm_params_new(void);

/**
 * Sets one parameter by its config key (e.g. `"relaxation_time"`).
 *
 * # Safety
 * `params` must come from [`hsfm_params_new`]; `key` must be a valid C string.
 */
enum HsfmStatus hsfm_params_set(struct HsfmParamsHandle *params, const char *key, double value);

/**
 * # Safety
 * `params` must be null or come from [`hsfm_params_new`], and not be used afterwards.
 */
void hsfm_params_free(struct HsfmParamsHandle *params);

/**
 * Empty scene at `timestamp` seconds; free with [`hsfm_scene_free`].
 */
struct HsfmScene *hsfm_scene_new(double timestamp);

/**
 * Adds an agent heading for `(goal_x, goal_y)` at `desired_speed` m/s.
 *
 * # Safety
 * `scene` must come from [`hsfm_scene_new`].
 */
enum HsfmStatus hsfm_scene_add_agent(struct HsfmScene *scene,
                                     uint64_t id,
                                     struct HsfmAgentState state,
                                     double goal_x,
                                     double goal_y,
                                     double desired_speed);

/**
 * # Safety
 * `scene` must be null or come from [`hsfm_scene_new`], and not be used afterwards.
 */
void hsfm_scene_free(struct HsfmScene *scene);

/**
 * Mean rollout of agent `id`: writes `steps + 1` states into `out`.
 *
 * # Safety
 * Handles must be valid; `out` must be valid for `out_len` entries.
 */
enum HsfmStatus hsfm_rollout(const struct HsfmScene *scene,
                             const struct HsfmParamsHandle *params,
                             uint64_t id,
                             uintptr_t steps,
                             struct HsfmAgentState *out,
                             uintptr_t out_len);

/**
 * Forward-propagated position belief of agent `id`: `steps + 1` entries.
 *
 * # Safety
 * Handles must be valid; `out` must be valid for `out_len` entries.
 */
enum HsfmStatus hsfm_fp_rollout(const struct HsfmScene *scene,
                                const struct HsfmParamsHandle *params,
                                uint64_t id,
                                struct HsfmInitNoise noise,
                                uintptr_t steps,
                                struct HsfmPrediction *out,
                                uintptr_t out_len);

/**
 * Monte-Carlo position statistics of agent `id`: `steps + 1` entries.
 *
 * # Safety
 * Handles must be valid; `out` must be valid for `out_len` entries.
 */
enum HsfmStatus hsfm_mc_estimate(const struct HsfmScene *scene,
                                 const struct HsfmParamsHandle *params,
                                 uint64_t id,
                                 struct HsfmInitNoise noise,
                                 uintptr_t n_samples,
                                 uint64_t seed,
                                 uintptr_t steps,
                                 struct HsfmPrediction *out,
                                 uintptr_t out_len);

/**
 * Loads network weights; on success `*out` owns a handle to free with
 * [`hsfm_covnet_free`].
 *
 * # Safety
 * `path` must be a valid C string and `out` a valid pointer.
 */
enum HsfmStatus hsfm_covnet_load(const char *path, struct HsfmCovNet **out);

/**
 * # Safety
 * `net` must be null or come from [`hsfm_covnet_load`], and not be used afterwards.
 */
void hsfm_covnet_free(struct HsfmCovNet *net);

/**
 * One network evaluation. `input` holds 8 values
 * `x, y, vx, vy, var_x, var_y, pred_x, pred_y`; `out` receives `var_x, var_y`.
 *
 * # Safety
 * `input` must point to 8 readable and `out` to 2 writable doubles.
 */
enum HsfmStatus hsfm_covnet_forward(const struct HsfmCovNet *net, const double *input, double *out);

/**
 * Mean rollout with per-layer network variances: `steps + 1` entries,
 * covariances diagonal.
 *
 * # Safety
 * Handles must be valid; `out` must be valid for `out_len` entries.
 */
enum HsfmStatus hsfm_signn_rollout(const struct HsfmScene *scene,
                                   const struct HsfmParamsHandle *params,
                                   const struct HsfmCovNet *net,
                                   uint64_t id,
                                   double var0_x,
                                   double var0_y,
                                   uintptr_t steps,
                                   struct HsfmPrediction *out,
                                   uintptr_t out_len);

/**
 * Mahalanobis distance of the error `(ex, ey)` under a 2x2 covariance.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum HsfmStatus hsfm_mahalanobis(double ex,
                                 double ey,
                                 double cov_xx,
                                 double cov_xy,
                                 double cov_yy,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HSFM_SIGNN_H */
