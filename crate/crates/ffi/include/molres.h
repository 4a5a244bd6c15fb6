#ifndef MOLRES_H
#define MOLRES_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MolresStatus {
  MOLRES_STATUS_OK = 0,
  // Invalid argument, configuration or I/O failure.
  MOLRES_STATUS_INVALID = 2,
  MOLRES_STATUS_RESOURCE_CAP = 3,
  MOLRES_STATUS_NUMERICAL = 4,
  // A Rust panic was caught at the boundary.
  MOLRES_STATUS_INTERNAL = 5,
} MolresStatus;

typedef enum MolresTaskKind {
  MOLRES_TASK_KIND_FORECAST_MG = 0,
  MOLRES_TASK_KIND_SINE_TO_SQUARE = 1,
  MOLRES_TASK_KIND_MG_CUBED = 2,
} MolresTaskKind;

// Opaque channel parameter set.
typedef struct MolresParams MolresParams;

// Opaque benchmark series.
typedef struct MolresTask MolresTask;

// Opaque bound-fraction trace.
typedef struct MolresTrace MolresTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next call into this library on the same thread.
const char *molres_last_error(void);

// Library version as a static NUL-terminated string.
const char *molres_version(void);

// Create a parameter set. `distance` is in metres.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum MolresStatus molres_params_new(double k_on,
                                    double k_off,
                                    double symbol_duration,
                                    double distance,
                                    uint32_t n_max,
                                    double diffusion,
                                    uintptr_t memory_window,
                                    struct MolresParams **out);

// Preset optimum for `kind`.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum MolresStatus molres_params_preset(enum MolresTaskKind kind, struct MolresParams **out);

// Dissociation constant `k_off / k_on` in m^-3, or NaN for NULL.
//
// # Safety
// `params` must be NULL or a live handle.
double molres_params_dissociation_constant(const struct MolresParams *params);

// # Safety
// `params` must be NULL or a handle from this library not yet freed.
void molres_params_free(struct MolresParams *params);

// Generate a benchmark series. `horizon` 0 selects the task default;
// `seed` seeds the Mackey-Glass history.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum MolresStatus molres_task_new(enum MolresTaskKind kind,
                                  uintptr_t num_symbols,
                                  uintptr_t horizon,
                                  uint64_t seed,
                                  struct MolresTask **out);

// Number of symbols, 0 for NULL.
//
// # Safety
// `task` must be NULL or a live handle.
uintptr_t molres_task_len(const struct MolresTask *task);

// Copy up to `cap` inputs into `buf`; returns the number copied.
//
// # Safety
// `task` must be a live handle and `buf` must have room for `cap` values.
uintptr_t molres_task_inputs(const struct MolresTask *task, double *buf, uintptr_t cap);

// # Safety
// `task` must be NULL or a handle from this library not yet freed.
void molres_task_free(struct MolresTask *task);

// Deterministic bound-fraction trace for `len` inputs in `[0, 1]`.
//
// # Safety
// `params` must be a live handle, `inputs` must point to `len` values and
// `out` to writable storage for one handle.
enum MolresStatus molres_simulate(const struct MolresParams *params,
                                  const double *inputs,
                                  uintptr_t len,
                                  struct MolresTrace **out);

// Number of samples, 0 for NULL.
//
// # Safety
// `trace` must be NULL or a live handle.
uintptr_t molres_trace_len(const struct MolresTrace *trace);

// Sample spacing in seconds, NaN for NULL.
//
// # Safety
// `trace` must be NULL or a live handle.
double molres_trace_dt(const struct MolresTrace *trace);

// Copy up to `cap` samples into `buf`; returns the number copied.
//
// # Safety
// `trace` must be a live handle and `buf` must have room for `cap` values.
uintptr_t molres_trace_samples(const struct MolresTrace *trace, double *buf, uintptr_t cap);

// # Safety
// `trace` must be NULL or a handle from this library not yet freed.
void molres_trace_free(struct MolresTrace *trace);

// Test NRMSE of the deterministic pipeline with default reservoir
// settings (20 virtual nodes, washout 50, ridge 1e-6, 70/30 split).
//
// # Safety
// `params` and `task` must be live handles; `out_nrmse` must be writable.
enum MolresStatus molres_evaluate(const struct MolresParams *params,
                                  const struct MolresTask *task,
                                  double *out_nrmse);

// Test NRMSE of the particle pipeline averaged over `replicates` runs
// seeded from `seed`, with a causal moving average of `filter_window`
// samples (0 disables it).
//
// # Safety
// `params` and `task` must be live handles; `out_nrmse` must be writable.
enum MolresStatus molres_evaluate_stochastic(const struct MolresParams *params,
                                             const struct MolresTask *task,
                                             uintptr_t replicates,
                                             uint64_t seed,
                                             uintptr_t filter_window,
                                             double *out_nrmse);

// Run an experiment configuration, as the command-line tool does.
// `mode` is one of `evaluate`, `optimize`, `crisscross`,
// `stochastic_compare` or `filter_sweep`.
//
// # Safety
// The string arguments must be NULL-terminated UTF-8.
enum MolresStatus molres_run_config(const char *config_path,
                                    const char *mode,
                                    const char *out_dir,
                                    uint64_t seed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOLRES_H */
