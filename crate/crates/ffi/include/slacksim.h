#ifndef SLACKSIM_H
#define SLACKSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum SlacksimStatus {
  SLACKSIM_STATUS_OK = 0,
  SLACKSIM_STATUS_NULL_POINTER = 1,
  SLACKSIM_STATUS_INVALID_UTF8 = 2,
  SLACKSIM_STATUS_INVALID_ARGUMENT = 3,
  SLACKSIM_STATUS_PARSE = 4,
  SLACKSIM_STATUS_SIMULATION = 5,
  SLACKSIM_STATUS_OUT_OF_RANGE = 6,
  SLACKSIM_STATUS_PANIC = 7,
} SlacksimStatus;

/**
 * Opaque machine model handle.
 */
typedef struct SlacksimMachine SlacksimMachine;

/**
 * Opaque simulation result handle.
 */
typedef struct SlacksimResult SlacksimResult;

/**
 * Opaque workload handle.
 */
typedef struct SlacksimWorkload SlacksimWorkload;

/**
 * Per-rank phase totals in seconds.
 */
typedef struct SlacksimPhaseTotals {
  double comp;
  double slack;
  double copy;
  double overhead;
} SlacksimPhaseTotals;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *slacksim_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *slacksim_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void slacksim_string_free(char *s);

/**
 * Default machine model.
 *
 * # Safety
 * `out` must be a valid pointer to write the handle to.
 */
enum SlacksimStatus slacksim_machine_default(struct SlacksimMachine **out);

/**
 * Machine model from JSON with every field of the model, durations in
 * seconds.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` a valid pointer.
 */
enum SlacksimStatus slacksim_machine_from_json(const char *json, struct SlacksimMachine **out);

/**
 * # Safety
 * `m` must be null or a handle from this library, not yet freed.
 */
void slacksim_machine_free(struct SlacksimMachine *m);

/**
 * Generates a workload from a generator spec in JSON, e.g.
 * `{"pattern":"imbalanced_barrier","n_ranks":4,"n_iterations":10,"comp_mean":"5ms"}`.
 *
 * # Safety
 * `spec_json` must be a NUL-terminated string; `out` a valid pointer.
 */
enum SlacksimStatus slacksim_workload_generate(const char *spec_json,
                                               struct SlacksimWorkload **out);

/**
 * Parses a serialized workload document and checks it for deadlocks.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` a valid pointer.
 */
enum SlacksimStatus slacksim_workload_from_json(const char *json, struct SlacksimWorkload **out);

/**
 * Serializes a workload; free the string with [`slacksim_string_free`].
 *
 * # Safety
 * `w` must be a live handle; `out` a valid pointer.
 */
enum SlacksimStatus slacksim_workload_to_json(const struct SlacksimWorkload *w, char **out);

/**
 * Number of ranks, 0 for a null handle.
 *
 * # Safety
 * `w` must be null or a live handle.
 */
size_t slacksim_workload_n_ranks(const struct SlacksimWorkload *w);

/**
 * # Safety
 * `w` must be null or a handle from this library, not yet freed.
 */
void slacksim_workload_free(struct SlacksimWorkload *w);

/**
 * Runs `w` on `m` under `policy`, given as `kind[:theta]`
 * (e.g. `countdown-slack:500us`).
 *
 * # Safety
 * `w` and `m` must be live handles, `policy` a NUL-terminated string and
 * `out` a valid pointer.
 */
enum SlacksimStatus slacksim_simulate(const struct SlacksimWorkload *w,
                                      const struct SlacksimMachine *m,
                                      const char *policy,
                                      struct SlacksimResult **out);

/**
 * Comparison table CSV for one workload under the default policy set.
 *
 * # Safety
 * `w` and `m` must be live handles, `application` a NUL-terminated string
 * and `out` a valid pointer.
 */
enum SlacksimStatus slacksim_compare_csv(const char *application,
                                         const struct SlacksimWorkload *w,
                                         const struct SlacksimMachine *m,
                                         char **out);

/**
 * Makespan in seconds, NaN for a null handle.
 *
 * # Safety
 * `r` must be null or a live handle.
 */
double slacksim_result_makespan(const struct SlacksimResult *r);

/**
 * Energy in joules, NaN for a null handle.
 *
 * # Safety
 * `r` must be null or a live handle.
 */
double slacksim_result_energy(const struct SlacksimResult *r);

/**
 * Effective P-state transitions over all ranks.
 *
 * # Safety
 * `r` must be null or a live handle.
 */
size_t slacksim_result_transitions(const struct SlacksimResult *r);

/**
 * # Safety
 * `r` must be null or a live handle.
 */
size_t slacksim_result_n_ranks(const struct SlacksimResult *r);

/**
 * Phase totals of one rank, or of the whole run when `rank` is `SIZE_MAX`.
 *
 * # Safety
 * `r` must be a live handle and `out` a valid pointer.
 */
enum SlacksimStatus slacksim_result_phase_totals(const struct SlacksimResult *r,
                                                 size_t rank,
                                                 struct SlacksimPhaseTotals *out);

/**
 * Full result as JSON; free the string with [`slacksim_string_free`].
 *
 * # Safety
 * `r` must be a live handle; `out` a valid pointer.
 */
enum SlacksimStatus slacksim_result_to_json(const struct SlacksimResult *r, char **out);

/**
 * # Safety
 * `r` must be null or a handle from this library, not yet freed.
 */
void slacksim_result_free(struct SlacksimResult *r);

/**
 * Symmetric absolute percentage error in [0, 100]; 0 when both are 0.
 */
double slacksim_smape(double predicted, double actual);

/**
 * First PCU boundary at or after `request`.
 */
double slacksim_pcu_effective_time(double request, double quantum);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SLACKSIM_H */
