#ifndef POSERR_H
#define POSERR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PoserrStatus {
  POSERR_STATUS_OK = 0,
  POSERR_STATUS_NULL_POINTER = 1,
  POSERR_STATUS_INVALID_ARGUMENT = 2,
  POSERR_STATUS_INVALID_CONFIG = 3,
  POSERR_STATUS_NON_CONVERGENCE = 4,
  POSERR_STATUS_INSUFFICIENT_DATA = 5,
  POSERR_STATUS_IO = 6,
  POSERR_STATUS_PANIC = 7,
} PoserrStatus;

/**
 * Control modes accepted by [`poserr_scenario_new_preset`].
 */
typedef enum PoserrMode {
  POSERR_MODE_STATIC_FF = 0,
  POSERR_MODE_DYNAMIC_FF = 1,
  POSERR_MODE_FEEDBACK = 2,
} PoserrMode;

/**
 * Opaque scenario handle.
 */
typedef struct PoserrScenario PoserrScenario;

typedef struct PoserrSteadyState {
  double omega_e;
  double delta_theta_e;
  double id;
  double iq;
  double id_hat;
  double iq_hat;
  double vd_cmd;
  double vq_cmd;
  double torque;
  double peak_voltage;
  double elapsed;
  bool converged;
  bool voltage_warning;
} PoserrSteadyState;

/**
 * Closed-form prediction. `vd_cmd`/`vq_cmd` are NaN when not available.
 */
typedef struct PoserrPrediction {
  double id;
  double iq;
  double torque;
  double vd_cmd;
  double vq_cmd;
} PoserrPrediction;

typedef struct PoserrCalibration {
  /**
   * Sensor offset (rad).
   */
  double delta_theta0;
  /**
   * Sensing delay (s).
   */
  double t_d;
  double residual_rms;
  double condition_number;
  bool ill_conditioned;
} PoserrCalibration;

/**
 * Machine parameters of a scenario's plant.
 */
typedef struct PoserrMachine {
  double r;
  double ld;
  double lq;
  double lambda_m;
  uint32_t pole_pairs;
} PoserrMachine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static description of a status code. Never null.
 */
const char *poserr_status_str(enum PoserrStatus status);

/**
 * Message for the last failed call on this thread, or null.
 *
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *poserr_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *poserr_version(void);

/**
 * Electrical angular velocity (rad/s) for a mechanical speed in RPM.
 */
double poserr_omega_e_from_rpm(double rpm, uint32_t pole_pairs);

/**
 * Creates a scenario from a built-in machine preset (`"spmsm_9s6p"`,
 * `"ipmsm_9s6p"`) with exact parameter estimates, no position error and a
 * zero current command. `mode` is a [`PoserrMode`] value.
 *
 * # Safety
 *
 * `preset` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PoserrStatus poserr_scenario_new_preset(const char *preset,
                                             uint32_t mode,
                                             struct PoserrScenario **out);

/**
 * Creates a scenario from a TOML or JSON scenario file, using its first
 * current command.
 *
 * # Safety
 *
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PoserrStatus poserr_scenario_from_file(const char *path, struct PoserrScenario **out);

/**
 * Releases a scenario. Null is ignored.
 *
 * # Safety
 *
 * `scenario` must come from this library and not be used afterwards.
 */
void poserr_scenario_free(struct PoserrScenario *scenario);

/**
 * Sets the position error model: offset (rad), delay (s) and their
 * compensation values.
 *
 * # Safety
 *
 * `scenario` must be a live handle.
 */
enum PoserrStatus poserr_scenario_set_errors(struct PoserrScenario *scenario,
                                             double delta_theta0,
                                             double t_d,
                                             double delta_theta0_hat,
                                             double t_d_hat);

/**
 * Sets the current command (A).
 *
 * # Safety
 *
 * `scenario` must be a live handle.
 */
enum PoserrStatus poserr_scenario_set_command(struct PoserrScenario *scenario,
                                              double id,
                                              double iq);

/**
 * Sets the PWM period (s), RK4 substeps per period and settle time (s).
 *
 * # Safety
 *
 * `scenario` must be a live handle.
 */
enum PoserrStatus poserr_scenario_set_sim(struct PoserrScenario *scenario,
                                          double t_p,
                                          uint32_t substeps,
                                          double settle_time);

/**
 * Simulates one operating point to steady state.
 *
 * On [`PoserrStatus::NonConvergence`] `out` still holds the last window,
 * with `converged == false`.
 *
 * # Safety
 *
 * `scenario` must be a live handle and `out` a valid pointer.
 */
enum PoserrStatus poserr_run(const struct PoserrScenario *scenario,
                             double omega_e,
                             struct PoserrSteadyState *out);

/**
 * Closed-form steady-state prediction for the scenario at `omega_e`.
 *
 * # Safety
 *
 * `scenario` must be a live handle and `out` a valid pointer.
 */
enum PoserrStatus poserr_predict(const struct PoserrScenario *scenario,
                                 double omega_e,
                                 struct PoserrPrediction *out);

/**
 * Fits sensor offset and delay to zero-current voltage commands measured
 * under feedback control at `n` speeds.
 *
 * # Safety
 *
 * `omega_e`, `vd_cmd` and `vq_cmd` must each point to `n` doubles and `out`
 * must be a valid pointer.
 */
enum PoserrStatus poserr_fit_offset_and_delay(const double *omega_e,
                                              const double *vd_cmd,
                                              const double *vq_cmd,
                                              size_t n,
                                              double t_p,
                                              double lambda_m,
                                              struct PoserrCalibration *out);

/**
 * Feedback steady-state currents for command `(id_cmd, iq_cmd)` and
 * position error `delta_theta_e` (rad).
 *
 * # Safety
 *
 * `id` and `iq` must be valid pointers.
 */
enum PoserrStatus poserr_fb_steady_currents(double id_cmd,
                                            double iq_cmd,
                                            double delta_theta_e,
                                            double *id,
                                            double *iq);

/**
 * Copies the plant parameters of a scenario.
 *
 * # Safety
 *
 * `scenario` must be a live handle and `out` a valid pointer.
 */
enum PoserrStatus poserr_scenario_machine(const struct PoserrScenario *scenario,
                                          struct PoserrMachine *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POSERR_H */
