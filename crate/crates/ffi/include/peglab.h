#ifndef PEGLAB_H
#define PEGLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Length of an observation vector: the pose (position, rotation vector)
 * followed by the wrench, both in the task frame.
 */
#define PEGLAB_OBS_DIM 12

typedef enum PeglabMpStatus {
  PEGLAB_MP_STATUS_CONTINUE = 0,
  PEGLAB_MP_STATUS_SUCCESS = 1,
  PEGLAB_MP_STATUS_FAILURE = 2,
} PeglabMpStatus;

typedef enum PeglabStatus {
  PEGLAB_STATUS_OK = 0,
  PEGLAB_STATUS_NULL_POINTER = 1,
  PEGLAB_STATUS_INVALID_ARGUMENT = 2,
  PEGLAB_STATUS_INVALID_CONFIG = 3,
  PEGLAB_STATUS_INFEASIBLE_ACTION = 4,
  PEGLAB_STATUS_START_IN_COLLISION = 5,
  PEGLAB_STATUS_NON_FINITE = 6,
  PEGLAB_STATUS_CHECKPOINT = 7,
  PEGLAB_STATUS_IO = 8,
  PEGLAB_STATUS_PARSE = 9,
  PEGLAB_STATUS_BUFFER_TOO_SMALL = 10,
  PEGLAB_STATUS_PANIC = 11,
} PeglabStatus;

/**
 * Primitive environment built from a run config.
 */
typedef struct PeglabEnv PeglabEnv;

/**
 * Trained policy loaded from a checkpoint.
 */
typedef struct PeglabPolicy PeglabPolicy;

/**
 * Outcome of one primitive step.
 */
typedef struct PeglabStepInfo {
  size_t mp_index;
  enum PeglabMpStatus status;
  double duration_s;
  uint64_t control_steps;
  double true_distance_m;
  bool success;
  size_t mp_count;
} PeglabStepInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length in
 * bytes, excluding the terminator.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t peglab_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *peglab_version(void);

/**
 * Builds an environment from a TOML run config (method `hybrid` or
 * `discrete`).
 *
 * # Safety
 * `config_toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PeglabStatus peglab_env_new(const char *config_toml, struct PeglabEnv **out);

/**
 * # Safety
 * `env` must be null or a handle from [`peglab_env_new`] not yet freed.
 */
void peglab_env_free(struct PeglabEnv *env);

/**
 * Number of primitives in the environment's catalog.
 *
 * # Safety
 * `env` must be a live handle and `out` a valid pointer.
 */
enum PeglabStatus peglab_env_num_primitives(const struct PeglabEnv *env, size_t *out);

/**
 * Number of learnable parameters of primitive `index`.
 *
 * # Safety
 * `env` must be a live handle and `out` a valid pointer.
 */
enum PeglabStatus peglab_env_primitive_dim(const struct PeglabEnv *env, size_t index, size_t *out);

/**
 * Starts an episode and writes the first observation.
 *
 * # Safety
 * `env` must be a live handle; `obs_out` must hold [`PEGLAB_OBS_DIM`]
 * doubles.
 */
enum PeglabStatus peglab_env_reset(struct PeglabEnv *env, uint64_t seed, double *obs_out);

/**
 * Whether `obs` counts as in contact (selects the feasible primitives).
 *
 * # Safety
 * `env` must be a live handle, `obs` must hold [`PEGLAB_OBS_DIM`]
 * doubles and `out` must be valid.
 */
enum PeglabStatus peglab_env_is_contact(const struct PeglabEnv *env, const double *obs, bool *out);

/**
 * Executes primitive `mp_index` with `n_params` normalized parameters.
 *
 * # Safety
 * `env` must be a live handle; `params` must hold `n_params` doubles (may
 * be null when `n_params` is 0); `obs_out` must hold
 * [`PEGLAB_OBS_DIM`] doubles; `reward`, `done` and `info` must be valid.
 */
enum PeglabStatus peglab_env_step(struct PeglabEnv *env,
                                  size_t mp_index,
                                  const double *params,
                                  size_t n_params,
                                  double *obs_out,
                                  double *reward,
                                  bool *done,
                                  struct PeglabStepInfo *info);

/**
 * Loads a policy checkpoint (JSON).
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PeglabStatus peglab_policy_load(const char *path, struct PeglabPolicy **out);

/**
 * Checks that a policy acts over the given environment's primitives.
 *
 * # Safety
 * Both handles must be live and `out` valid.
 */
enum PeglabStatus peglab_policy_matches_env(const struct PeglabPolicy *policy,
                                            const struct PeglabEnv *env,
                                            bool *out);

/**
 * # Safety
 * `policy` must be null or a handle from [`peglab_policy_load`] not yet
 * freed.
 */
void peglab_policy_free(struct PeglabPolicy *policy);

/**
 * Inference-mode action: most probable feasible primitive and the mean of
 * its parameter distribution (normalized). `params_len` receives the
 * parameter count; fails with `BufferTooSmall` if it exceeds
 * `params_cap`.
 *
 * # Safety
 * `policy` must be a live handle, `obs` must hold [`PEGLAB_OBS_DIM`]
 * doubles, `params_out` must hold `params_cap` doubles (may be null when
 * `params_cap` is 0) and `mp_out`/`params_len` must be valid.
 */
enum PeglabStatus peglab_policy_act(const struct PeglabPolicy *policy,
                                    const double *obs,
                                    bool contact,
                                    size_t *mp_out,
                                    double *params_out,
                                    size_t params_cap,
                                    size_t *params_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PEGLAB_H */
