#ifndef GFL_H
#define GFL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum GflStatus {
  GFL_STATUS_OK = 0,
  // A required pointer was null.
  GFL_STATUS_NULL_POINTER = 1,
  // Bad argument: unknown system, malformed parameters, wrong length.
  GFL_STATUS_INVALID_ARGUMENT = 2,
  // The solver failed to produce a step.
  GFL_STATUS_SOLVER = 3,
  // A scenario run ended with a hard diagnostic outside its tolerance.
  GFL_STATUS_DIAGNOSTIC_FAILED = 4,
  GFL_STATUS_IO = 5,
  // A Rust panic was caught at the boundary.
  GFL_STATUS_INTERNAL = 6,
} GflStatus;

// A registered model system with its parameters and initial datum.
typedef struct GflSystem GflSystem;

// Node times and states of a discrete trajectory.
typedef struct GflTrajectory GflTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *gfl_version(void);

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next library call on the same thread.
const char *gfl_last_error_message(void);

// Releases a string returned by the library.
//
// # Safety
// `s` must be null or a pointer obtained from this library and not yet freed.
void gfl_string_free(char *s);

// Registered systems as a JSON array of `{"id", "description"}` objects.
//
// # Safety
// `out` must be a valid pointer; the string it receives is freed with
// [`gfl_string_free`].
enum GflStatus gfl_list_systems(char **out);

// Builds system `id`. `params_json` is null or a JSON object of numeric
// parameters, e.g. `{"a": 2.0}`.
//
// # Safety
// `id` must be a NUL-terminated string, `params_json` null or one, and
// `out` a valid pointer. The handle is released with [`gfl_system_free`].
enum GflStatus gfl_system_new(const char *id, const char *params_json, struct GflSystem **out);

// # Safety
// `sys` must be null or a handle from [`gfl_system_new`] not yet freed.
void gfl_system_free(struct GflSystem *sys);

// State dimension; 0 for check entries or a null handle.
//
// # Safety
// `sys` must be null or a live handle.
size_t gfl_system_dim(const struct GflSystem *sys);

// Default horizon and step count of the system.
//
// # Safety
// `sys` must be a live handle; `t_end` and `steps` valid pointers.
enum GflStatus gfl_system_defaults(const struct GflSystem *sys, double *t_end, size_t *steps);

// Copies the default initial state into `buf` of length `len`, which
// must equal [`gfl_system_dim`].
//
// # Safety
// `sys` must be a live handle and `buf` valid for `len` writes.
enum GflStatus gfl_system_initial_state(const struct GflSystem *sys, double *buf, size_t len);

// Runs the discrete scheme on `[0, t_end]` with `n` uniform steps from
// `u0` (length [`gfl_system_dim`]; null for the default datum). Gradient
// systems use minimizing movements, rate-independent ones the incremental
// minimization.
//
// # Safety
// `sys` must be a live handle, `u0` null or valid for `len` reads, and
// `out` a valid pointer. The trajectory is released with
// [`gfl_trajectory_free`].
enum GflStatus gfl_run(const struct GflSystem *sys,
                       const double *u0,
                       size_t len,
                       double t_end,
                       size_t n,
                       struct GflTrajectory **out);

// # Safety
// `traj` must be null or a handle from [`gfl_run`] not yet freed.
void gfl_trajectory_free(struct GflTrajectory *traj);

// Number of nodes; 0 for a null handle.
//
// # Safety
// `traj` must be null or a live handle.
size_t gfl_trajectory_len(const struct GflTrajectory *traj);

// Time and state of node `k`; `state` must hold the system dimension.
//
// # Safety
// `traj` must be a live handle, `time` a valid pointer and `state` valid
// for `len` writes.
enum GflStatus gfl_trajectory_node(const struct GflTrajectory *traj,
                                   size_t k,
                                   double *time,
                                   double *state,
                                   size_t len);

// Signed energy-dissipation balance residual over the whole run.
//
// # Safety
// `sys` and `traj` must be live handles, `traj` produced from `sys`, and
// `residual` a valid pointer.
enum GflStatus gfl_edb_residual(const struct GflSystem *sys,
                                const struct GflTrajectory *traj,
                                double *residual);

// Runs a scenario file as `gfl run` does and writes `trajectory.csv` and
// `report.json` to `out_dir` (null: the scenario's own setting).
//
// # Safety
// `path` must be a NUL-terminated string and `out_dir` null or one.
enum GflStatus gfl_run_scenario(const char *path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GFL_H */
