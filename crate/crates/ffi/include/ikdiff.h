#ifndef IKDIFF_H
#define IKDIFF_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum IkStatus {
  IK_STATUS_OK = 0,
  IK_STATUS_NULL_POINTER = 1,
  IK_STATUS_INVALID_ARGUMENT = 2,
  IK_STATUS_PARSE = 3,
  IK_STATUS_IO = 4,
  IK_STATUS_UNKNOWN_BONE = 5,
  IK_STATUS_DIMENSION = 6,
  IK_STATUS_INVALID_SKELETON = 7,
  IK_STATUS_INVALID_OBJECTIVE = 8,
  IK_STATUS_INVALID_CONFIG = 9,
  IK_STATUS_NON_FINITE = 10,
  IK_STATUS_PANIC = 99,
} IkStatus;

typedef enum IkStopReason {
  IK_STOP_REASON_THRESHOLD = 0,
  IK_STOP_REASON_MAX_ITERATIONS = 1,
  IK_STOP_REASON_TIME_BUDGET = 2,
} IkStopReason;

// Controlled degrees of freedom of one skeleton.
typedef struct IkLayout IkLayout;

// Weighted list of objective terms, edited in place between solves.
typedef struct IkObjective IkObjective;

// Skeleton handle.
typedef struct IkSkeleton IkSkeleton;

// Solver settings; obtain defaults from [`ik_solver_config_default`].
typedef struct IkSolverConfig {
  double learning_rate;
  double beta1;
  double beta2;
  double epsilon;
  uint32_t max_iterations;
  double loss_threshold;
  // Milliseconds; zero or negative disables the time budget.
  double time_budget_ms;
  bool cautious;
  bool cautious_scaling;
} IkSolverConfig;

typedef struct IkSolveResult {
  double final_loss;
  uint32_t iterations;
  uint32_t iteration_limit;
  double wall_time_ms;
  bool success;
  enum IkStopReason stop_reason;
} IkSolveResult;

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *ik_last_error_message(void);

// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum IkStatus ik_skeleton_load(const char *path, struct IkSkeleton **out);

// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum IkStatus ik_skeleton_from_json(const char *json, struct IkSkeleton **out);

// The bundled synthetic humanoid upper body.
//
// # Safety
// `out` must be a valid pointer.
enum IkStatus ik_skeleton_humanoid(struct IkSkeleton **out);

// # Safety
// `skel` must be null or a handle from this library, not yet freed.
void ik_skeleton_free(struct IkSkeleton *skel);

// # Safety
// Pointers must be valid.
enum IkStatus ik_skeleton_bone_count(const struct IkSkeleton *skel, size_t *out);

// # Safety
// Pointers must be valid; `name` NUL-terminated.
enum IkStatus ik_skeleton_bone_index(const struct IkSkeleton *skel, const char *name, size_t *out);

// Layout over the controlled axes of `names[0..count]`.
//
// # Safety
// `names` must point to `count` NUL-terminated strings.
enum IkStatus ik_layout_new(const struct IkSkeleton *skel,
                            const char *const *names,
                            size_t count,
                            struct IkLayout **out);

// Layout over every controlled axis of the skeleton.
//
// # Safety
// Pointers must be valid.
enum IkStatus ik_layout_all(const struct IkSkeleton *skel, struct IkLayout **out);

// # Safety
// `layout` must be null or a handle from this library, not yet freed.
void ik_layout_free(struct IkLayout *layout);

// # Safety
// Pointers must be valid.
enum IkStatus ik_layout_len(const struct IkLayout *layout, size_t *out);

// Copies the lower and upper bounds into arrays of `len` entries.
//
// # Safety
// `lower` and `upper` must hold `len` doubles.
enum IkStatus ik_layout_bounds(const struct IkLayout *layout,
                               double *lower,
                               double *upper,
                               size_t len);

// Empty objective; add terms before solving.
//
// # Safety
// `out` must be a valid pointer.
enum IkStatus ik_objective_new(struct IkObjective **out);

// Objective from the JSON objective-file format, resolved against `skel`
// and `layout` (the file's own `controlled` list is ignored).
//
// # Safety
// Pointers must be valid; `json` NUL-terminated.
enum IkStatus ik_objective_from_json(const struct IkSkeleton *skel,
                                     const struct IkLayout *layout,
                                     const char *json,
                                     struct IkObjective **out);

// # Safety
// `obj` must be null or a handle from this library, not yet freed.
void ik_objective_free(struct IkObjective *obj);

// # Safety
// `offset` and `target` must point to 3 doubles.
enum IkStatus ik_objective_add_distance(struct IkObjective *obj,
                                        double weight,
                                        size_t bone,
                                        const double *offset,
                                        const double *target);

// # Safety
// `local_axis` and `target_dir` must point to 3 doubles.
enum IkStatus ik_objective_add_look_at(struct IkObjective *obj,
                                       double weight,
                                       size_t bone,
                                       const double *local_axis,
                                       const double *target_dir);

// `mask` entries are treated as booleans (nonzero selects the DOF).
//
// # Safety
// `theta_star` and `mask` must hold `len` entries.
enum IkStatus ik_objective_add_known_rotation(struct IkObjective *obj,
                                              double weight,
                                              const double *theta_star,
                                              const uint8_t *mask,
                                              size_t len);

// Smoothness energy of `order` (1, 2 or 3); only meaningful for [`ik_plan`].
//
// # Safety
// `obj` must be a valid handle.
enum IkStatus ik_objective_add_smoothness(struct IkObjective *obj, double weight, size_t order);

// Moves the target of every distance term; typical per-frame update.
//
// # Safety
// `target` must point to 3 doubles.
enum IkStatus ik_objective_set_target(struct IkObjective *obj, const double *target);

struct IkSolverConfig ik_solver_config_default(void);

// Solves from `theta0` and writes the final angles to `theta_out`. A solve
// that misses the threshold still returns `Ok`; check `result->success`.
// `config` may be null for defaults.
//
// # Safety
// `theta0` and `theta_out` must hold `len` doubles; other pointers valid.
enum IkStatus ik_solve(const struct IkSkeleton *skel,
                       const struct IkLayout *layout,
                       const struct IkObjective *obj,
                       const double *theta0,
                       size_t len,
                       const struct IkSolverConfig *config,
                       double *theta_out,
                       struct IkSolveResult *result);

// Optimizes a trajectory of `n_intermediate + 2` points. The objective's
// pose terms bind to the last point. `points_out` receives the points
// point-major (`(n_intermediate + 2) * len` doubles). Every smoothness
// order gets `smooth_weight`.
//
// # Safety
// `start` must hold `len` doubles and `points_out` `(n_intermediate + 2) * len`.
enum IkStatus ik_plan(const struct IkSkeleton *skel,
                      const struct IkLayout *layout,
                      const struct IkObjective *obj,
                      const double *start,
                      size_t len,
                      size_t n_intermediate,
                      double smooth_weight,
                      bool fixed_head,
                      const struct IkSolverConfig *config,
                      double *points_out,
                      struct IkSolveResult *result);

// World-space origin of every bone, `3 * bone_count` doubles.
//
// # Safety
// `theta` must hold `len` doubles and `positions_out` `3 * bone_count`.
enum IkStatus ik_forward_positions(const struct IkSkeleton *skel,
                                   const struct IkLayout *layout,
                                   const double *theta,
                                   size_t len,
                                   double *positions_out,
                                   size_t bone_count);

#endif  /* IKDIFF_H */
