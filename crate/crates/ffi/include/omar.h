#ifndef OMAR_H
#define OMAR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum OmarStatus {
  OMAR_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  OMAR_STATUS_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  OMAR_STATUS_INVALID_UTF8 = 2,
  /**
   * Bad arguments, configuration or input data.
   */
  OMAR_STATUS_INVALID_ARGUMENT = 3,
  /**
   * File system failure.
   */
  OMAR_STATUS_IO = 4,
  /**
   * Failure while running: numerics, environment, serialization.
   */
  OMAR_STATUS_RUNTIME = 5,
  /**
   * A panic was caught at the boundary.
   */
  OMAR_STATUS_PANIC = 6,
} OmarStatus;

/**
 * Opaque validated configuration.
 */
typedef struct OmarConfig OmarConfig;

/**
 * Opaque policy parameters.
 */
typedef struct OmarPolicy OmarPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static nul-terminated string.
 */
const char *omar_version(void);

/**
 * Message of the last failure on this thread, or null if the last call
 * succeeded. Do not free it.
 */
const char *omar_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void omar_string_free(char *s);

/**
 * Parses and validates a TOML configuration.
 *
 * # Safety
 * `toml` must be a nul-terminated string; `out` a valid pointer.
 */
enum OmarStatus omar_config_from_toml(const char *toml, struct OmarConfig **out);

/**
 * Loads and validates a TOML configuration file.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` a valid pointer.
 */
enum OmarStatus omar_config_load(const char *path, struct OmarConfig **out);

/**
 * The effective configuration, every default filled in, as TOML.
 *
 * # Safety
 * `cfg` must be a live handle; `out` a valid pointer.
 */
enum OmarStatus omar_config_to_toml(const struct OmarConfig *cfg, char **out);

/**
 * # Safety
 * `cfg` must be null or a handle from this library not yet freed.
 */
void omar_config_free(struct OmarConfig *cfg);

/**
 * Fresh parameters for the configured policy shape.
 *
 * # Safety
 * `cfg` must be a live handle; `out` a valid pointer.
 */
enum OmarStatus omar_policy_initial(const struct OmarConfig *cfg,
                                    uint64_t seed,
                                    struct OmarPolicy **out);

/**
 * Loads a policy checkpoint; with a non-null `cfg` its shape must match.
 *
 * # Safety
 * `path` must be a nul-terminated string, `cfg` null or a live handle and
 * `out` a valid pointer.
 */
enum OmarStatus omar_policy_load(const char *path,
                                 const struct OmarConfig *cfg,
                                 struct OmarPolicy **out);

/**
 * Writes a policy checkpoint.
 *
 * # Safety
 * `policy` must be a live handle and `path` a nul-terminated string.
 */
enum OmarStatus omar_policy_save(const struct OmarPolicy *policy, const char *path);

/**
 * # Safety
 * `policy` must be null or a handle from this library not yet freed.
 */
void omar_policy_free(struct OmarPolicy *policy);

/**
 * Plays one self-play episode and returns its record as JSON.
 *
 * # Safety
 * `cfg` and `policy` must be live handles; `out_json` a valid pointer.
 */
enum OmarStatus omar_run_episode_json(const struct OmarConfig *cfg,
                                      const struct OmarPolicy *policy,
                                      uint64_t seed,
                                      uint64_t episode_id,
                                      char **out_json);

/**
 * Runs the full training loop. With a non-null `out_dir` metrics,
 * checkpoints and trajectories are written there. The trained policy is
 * returned through `out_policy` when it is non-null.
 *
 * # Safety
 * `cfg` must be a live handle, `out_dir` null or a nul-terminated string and
 * `out_policy` null or a valid pointer.
 */
enum OmarStatus omar_train(const struct OmarConfig *cfg,
                           uint64_t seed,
                           const char *out_dir,
                           struct OmarPolicy **out_policy);

/**
 * Head-to-head evaluation of two policies under the configured arena
 * settings; returns the report as JSON.
 *
 * # Safety
 * `cfg`, `a` and `b` must be live handles; `out_json` a valid pointer.
 */
enum OmarStatus omar_arena_json(const struct OmarConfig *cfg,
                                const struct OmarPolicy *a,
                                const struct OmarPolicy *b,
                                char **out_json);

/**
 * Generalized advantage estimation over one trajectory:
 * `out[t] = δ_t + γλ·out[t+1]` with `δ_t = r_t + γ·v_{t+1} − v_t` and a
 * zero value past the end. All arrays have `len` entries.
 *
 * # Safety
 * The pointers must reference `len` readable (`out`: writable) doubles.
 */
enum OmarStatus omar_gae(const double *rewards,
                         const double *values,
                         size_t len,
                         double gamma,
                         double lambda,
                         double *out);

/**
 * Turn-level advantages and value targets for an episode whose reward
 * arrives after the last turn. `last_token_values`, `out_advantages` and
 * `out_targets` have `turns` entries.
 *
 * # Safety
 * The pointers must reference `turns` readable or writable doubles.
 */
enum OmarStatus omar_turn_advantages(const double *last_token_values,
                                     size_t turns,
                                     double episode_reward,
                                     double gamma,
                                     double lambda,
                                     double *out_advantages,
                                     double *out_targets);

/**
 * Clipped PPO surrogate `min(r·A, clip(r, 1−ε, 1+ε)·A)` for one token.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum OmarStatus omar_ppo_surrogate(double ratio, double advantage, double epsilon, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OMAR_H */
