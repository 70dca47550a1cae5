#ifndef MICROGRID_H
#define MICROGRID_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MgStatus {
  MG_STATUS_OK = 0,
  MG_STATUS_NULL_POINTER = 1,
  MG_STATUS_INVALID_ARGUMENT = 2,
  // Configuration rejected; the message lists every problem.
  MG_STATUS_VALIDATION = 3,
  MG_STATUS_RUNTIME = 4,
  MG_STATUS_NON_FINITE = 5,
  MG_STATUS_PANIC = 6,
} MgStatus;

// Resolved run configuration.
typedef struct MgConfig MgConfig;

// One test day of the configured dataset.
typedef struct MgEnv MgEnv;

// Frozen controller.
typedef struct MgPolicy MgPolicy;

typedef struct MgStepInfo {
  // $ for the slot just resolved.
  double cost;
  double shed_mw;
  double p_grid;
  double balance_residual;
  bool connected;
  bool done;
} MgStepInfo;

// Energy storage parameters, MW and MWh.
typedef struct MgEssSpec {
  double p_min;
  double p_max;
  double energy_cap;
  double soc_min;
  double soc_max;
  double eff_charge;
  double eff_discharge;
} MgEssSpec;

typedef struct MgMaskedAction {
  // Command in MW.
  double p;
  double p_low;
  double p_up;
} MgMaskedAction;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static NUL-terminated string.
const char *mg_version(void);

// Message of the calling thread's last failure; empty when none. Valid
// until the thread's next failing call.
const char *mg_last_error(void);

enum MgStatus mg_config_default(struct MgConfig **out);

// Parses a full TOML configuration, reporting every problem at once.
enum MgStatus mg_config_from_toml(const char *text, struct MgConfig **out);

enum MgStatus mg_config_ess_count(const struct MgConfig *config, size_t *out);

void mg_config_free(struct MgConfig *config);

// Environment for test day `day` (taken modulo the test-day count) with the
// scenario streams of evaluation position `day`.
enum MgStatus mg_env_new(const struct MgConfig *config, size_t day, struct MgEnv **out);

enum MgStatus mg_env_reset(struct MgEnv *env);

// Copies the current SoC of every ESS into `out` (`len` >= ESS count).
enum MgStatus mg_env_soc(const struct MgEnv *env, double *out, size_t len);

// Applies one command per ESS in MW and advances one slot.
enum MgStatus mg_env_step(struct MgEnv *env,
                          const double *commands,
                          size_t len,
                          struct MgStepInfo *info);

void mg_env_free(struct MgEnv *env);

// The rule-based controller.
enum MgStatus mg_policy_rule_based(const struct MgConfig *config, struct MgPolicy **out);

// A trained controller loaded from a checkpoint written under `config`.
enum MgStatus mg_policy_from_checkpoint(const struct MgConfig *config,
                                        const char *path,
                                        struct MgPolicy **out);

// Writes the policy's masked commands for the environment's current slot.
enum MgStatus mg_policy_act(struct MgPolicy *policy,
                            const struct MgEnv *env,
                            double *out,
                            size_t len);

void mg_policy_free(struct MgPolicy *policy);

// SoC after one slot at `p_ess` MW for `dt` hours, clamped to the band.
enum MgStatus mg_step_soc(const struct MgEssSpec *spec,
                          double soc,
                          double p_ess,
                          double dt,
                          double *out_soc);

// Maps a raw output in [-1, 1] onto the SoC-feasible power interval.
enum MgStatus mg_mask_action(const struct MgEssSpec *spec,
                             double soc,
                             double pi,
                             double dt,
                             struct MgMaskedAction *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MICROGRID_H */
