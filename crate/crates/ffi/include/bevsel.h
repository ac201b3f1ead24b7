#ifndef BEVSEL_H
#define BEVSEL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BevselPhase {
  BEVSEL_PHASE_INIT = 0,
  BEVSEL_PHASE_EXPLORE = 1,
  BEVSEL_PHASE_EXPLOIT = 2,
  BEVSEL_PHASE_INDEX = 3,
} BevselPhase;

typedef enum BevselStatus {
  BEVSEL_STATUS_OK = 0,
  BEVSEL_STATUS_NULL_POINTER = 1,
  BEVSEL_STATUS_INVALID_ARGUMENT = 2,
  BEVSEL_STATUS_CONFIG = 3,
  // A transition kernel failed validation or a computation did not converge.
  BEVSEL_STATUS_NUMERICAL = 4,
  BEVSEL_STATUS_BOUND_VIOLATION = 5,
  BEVSEL_STATUS_IO = 6,
  // Scenario hash or schema mismatch.
  BEVSEL_STATUS_MISMATCH = 7,
  BEVSEL_STATUS_BUFFER_TOO_SMALL = 8,
  BEVSEL_STATUS_PANIC = 9,
} BevselStatus;

// Opaque collaborator selector.
typedef struct BevselSelector BevselSelector;

// Oriented rectangle: centre, heading (rad), length along the heading, width.
typedef struct BevselRect {
  double x;
  double y;
  double heading;
  double length;
  double width;
} BevselRect;

typedef struct BevselBoundReport {
  double exploration_bound;
  double exploitation_bound;
  bool exploration_ok;
  bool exploitation_ok;
} BevselBoundReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *bevsel_version(void);

// Length in bytes, including the terminating NUL, of the calling thread's
// last error message; 0 when the last call succeeded.
size_t bevsel_last_error_length(void);

// Copies the last error message, NUL-terminated, into `buf`.
//
// # Safety
// `buf` must point to at least `cap` writable bytes.
enum BevselStatus bevsel_last_error_message(char *buf, size_t cap);

// Fusion deadline in ms for volatility `v_d` between `lf_min_ms` and `lf_max_ms`.
//
// # Safety
// `out_ms` must be a valid pointer.
enum BevselStatus bevsel_fusion_deadline(double v_d,
                                         double alpha,
                                         double lf_min_ms,
                                         double lf_max_ms,
                                         double *out_ms);

// Contribution lost by compressing with ratio `rho`.
//
// # Safety
// `out_value` must be a valid pointer.
enum BevselStatus bevsel_compression_degradation(double rho,
                                                 double beta,
                                                 double gamma,
                                                 double *out_value);

// Milliseconds to send `payload_bits / rho` bits at `rate_mbps`.
//
// # Safety
// `out_ms` must be a valid pointer.
enum BevselStatus bevsel_tx_latency_ms(double payload_bits,
                                       double rho,
                                       double rate_mbps,
                                       double *out_ms);

// Smallest ratio of `rho_set` meeting `deadline_ms`; `*out_late` is set
// when none does and the largest ratio is returned.
//
// # Safety
// `rho_set` must point to `rho_len` values; outputs must be valid pointers.
enum BevselStatus bevsel_select_compression(double rate_mbps,
                                            double feature_bits,
                                            double deadline_ms,
                                            const uint32_t *rho_set,
                                            size_t rho_len,
                                            uint32_t *out_rho,
                                            bool *out_late);

// Exploration threshold `D log2 t`.
//
// # Safety
// `out_value` must be a valid pointer.
enum BevselStatus bevsel_theta(uint64_t t, double d, double *out_value);

// `m + omega * a`.
//
// # Safety
// `out_value` must be a valid pointer.
enum BevselStatus bevsel_marginal_bev_contribution(double m,
                                                   double a,
                                                   double omega,
                                                   double *out_value);

// Fraction of `fov_i` outside `fov_e`.
//
// # Safety
// All pointers must be valid.
enum BevselStatus bevsel_normalized_extended_fov(const struct BevselRect *fov_i,
                                                 const struct BevselRect *fov_e,
                                                 double *out_value);

// RMS of `speeds[i] - ego_speed`; 0 for an empty list.
//
// # Safety
// `speeds` must point to `len` values; `out_value` must be valid.
enum BevselStatus bevsel_driving_volatility(double ego_speed,
                                            const double *speeds,
                                            size_t len,
                                            double *out_value);

// Exploration and exploitation epoch-count bounds at slot `t`.
//
// # Safety
// `out_report` must be a valid pointer.
enum BevselStatus bevsel_bound_check(uint32_t explorations,
                                     uint32_t exploitations,
                                     uint64_t t,
                                     size_t n,
                                     size_t k,
                                     double d,
                                     struct BevselBoundReport *out_report);

// Creates a selector over `n` collaborators with budget `k`.
//
// `policy` is one of `alg1`, `ecop`, `mass`, `random`, `optimal`; `seed`
// only affects `random`.
//
// # Safety
// `policy` must be a NUL-terminated string; `out_selector` a valid pointer.
enum BevselStatus bevsel_selector_new(const char *policy,
                                      size_t n,
                                      size_t k,
                                      double d,
                                      uint64_t seed,
                                      struct BevselSelector **out_selector);

// Releases a selector; NULL is ignored.
//
// # Safety
// `selector` must come from [`bevsel_selector_new`] and not be used again.
void bevsel_selector_free(struct BevselSelector *selector);

// Advances the selector one slot and writes the chosen ids (1-based,
// ascending) to `out_ids`.
//
// `hidden` (per-collaborator current values, length `n`) is required by
// the `optimal` policy and may be NULL otherwise. `out_phase` and
// `out_epoch` may be NULL.
//
// # Safety
// `selector` must be live; `out_ids` must hold `cap` values; `hidden`,
// when non-NULL, must hold `hidden_len` values.
enum BevselStatus bevsel_selector_select(struct BevselSelector *selector,
                                         const double *hidden,
                                         size_t hidden_len,
                                         uint32_t *out_ids,
                                         size_t cap,
                                         size_t *out_len,
                                         enum BevselPhase *out_phase,
                                         uint32_t *out_epoch);

// Reports the observed contribution of collaborator `id` for the current slot.
//
// # Safety
// `selector` must be live.
enum BevselStatus bevsel_selector_observe(struct BevselSelector *selector,
                                          uint32_t id,
                                          double value);

// Completed exploration and exploitation epochs.
//
// # Safety
// All pointers must be valid.
enum BevselStatus bevsel_selector_counters(const struct BevselSelector *selector,
                                           uint32_t *out_explorations,
                                           uint32_t *out_exploitations);

// Running mean of collaborator `id`'s observations.
//
// # Safety
// All pointers must be valid.
enum BevselStatus bevsel_selector_mean(const struct BevselSelector *selector,
                                       uint32_t id,
                                       double *out_mean);

// Forgets all statistics and restarts the slot clock.
//
// # Safety
// `selector` must be live.
enum BevselStatus bevsel_selector_reset(struct BevselSelector *selector);

// Runs the experiment described by the config file at `config_path` and
// writes its artifacts to `out_dir`.
//
// # Safety
// Strings must be NUL-terminated; `out_final_regret` may be NULL.
enum BevselStatus bevsel_run_experiment(const char *config_path,
                                        const char *out_dir,
                                        double *out_final_regret);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BEVSEL_H */
