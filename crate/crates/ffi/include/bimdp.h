#ifndef BIMDP_H
#define BIMDP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BimdpStatus {
  BIMDP_STATUS_OK = 0,
  BIMDP_STATUS_NULL_POINTER = 1,
  BIMDP_STATUS_CONFIG = 2,
  BIMDP_STATUS_IO = 3,
  BIMDP_STATUS_NOT_CONVERGED = 4,
  BIMDP_STATUS_CONTRACT = 5,
  BIMDP_STATUS_RESOURCE = 6,
  BIMDP_STATUS_PANIC = 7,
} BimdpStatus;

/**
 * A solved bi-level policy with its low-level cache.
 */
typedef struct BimdpBilevel BimdpBilevel;

/**
 * A solved flat value-iteration policy.
 */
typedef struct BimdpFlatSolution BimdpFlatSolution;

/**
 * A compiled problem.
 */
typedef struct BimdpProblem BimdpProblem;

/**
 * Position, time and tracking masks.
 */
typedef struct BimdpState {
  uint16_t x;
  uint16_t y;
  uint16_t t;
  uint32_t measured;
  uint32_t drilled;
  uint32_t visited;
} BimdpState;

typedef struct BimdpPlanSummary {
  double discounted_return;
  size_t steps;
  size_t high_level_decisions;
  size_t new_ll_solves;
} BimdpPlanSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *bimdp_last_error_message(void);

void bimdp_clear_last_error(void);

/**
 * Static version string.
 */
const char *bimdp_version(void);

/**
 * Compiles a problem from a JSON configuration string.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` a writable pointer.
 */
enum BimdpStatus bimdp_problem_from_json(const char *json, struct BimdpProblem **out);

/**
 * Compiles a problem from a JSON configuration file.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a writable pointer.
 */
enum BimdpStatus bimdp_problem_load(const char *path, struct BimdpProblem **out);

/**
 * # Safety
 * `problem` must be null or a handle from this library not yet freed.
 */
void bimdp_problem_free(struct BimdpProblem *problem);

/**
 * Number of flat states, the end sink included.
 *
 * # Safety
 * `problem` must be a live handle and `out` writable.
 */
enum BimdpStatus bimdp_problem_state_count(const struct BimdpProblem *problem, size_t *out);

/**
 * Writes the configured start state.
 *
 * # Safety
 * `problem` must be a live handle and `out` writable.
 */
enum BimdpStatus bimdp_problem_start(const struct BimdpProblem *problem, struct BimdpState *out);

/**
 * Runs flat value iteration. A run that stops at `max_iters` still
 * produces a solution; check it with [`bimdp_flat_converged`].
 *
 * # Safety
 * `problem` must be a live handle and `out` writable.
 */
enum BimdpStatus bimdp_solve_vi(const struct BimdpProblem *problem,
                                double tol,
                                size_t max_iters,
                                struct BimdpFlatSolution **out);

/**
 * # Safety
 * `solution` must be a live handle.
 */
bool bimdp_flat_converged(const struct BimdpFlatSolution *solution);

/**
 * Optimal value of `state`.
 *
 * # Safety
 * All pointers must be live handles or readable/writable as their types.
 */
enum BimdpStatus bimdp_flat_value(const struct BimdpProblem *problem,
                                  const struct BimdpFlatSolution *solution,
                                  const struct BimdpState *state,
                                  double *out);

/**
 * Discounted return of one seeded rollout of the flat policy.
 *
 * # Safety
 * All pointers must be live handles or readable/writable as their types.
 */
enum BimdpStatus bimdp_flat_simulate(const struct BimdpProblem *problem,
                                     const struct BimdpFlatSolution *solution,
                                     const struct BimdpState *state,
                                     uint64_t seed,
                                     double *out);

/**
 * # Safety
 * `solution` must be null or a handle from this library not yet freed.
 */
void bimdp_flat_solution_free(struct BimdpFlatSolution *solution);

/**
 * Solves the bi-level decomposition with every target of the problem and
 * the default heuristic.
 *
 * # Safety
 * `problem` must be a live handle and `out` writable. The result does not
 * borrow `problem`.
 */
enum BimdpStatus bimdp_solve_bilevel(const struct BimdpProblem *problem,
                                     double tol,
                                     size_t max_iters,
                                     struct BimdpBilevel **out);

/**
 * Plans from `state`, or from the start state when `state` is null.
 *
 * # Safety
 * `policy` must be a live handle, `state` null or readable, `out` writable.
 */
enum BimdpStatus bimdp_bilevel_plan(const struct BimdpBilevel *policy,
                                    const struct BimdpState *state,
                                    uint64_t seed,
                                    struct BimdpPlanSummary *out);

/**
 * ASCII drawing of one plan from the start state. Free the string with
 * [`bimdp_string_free`].
 *
 * # Safety
 * `policy` must be a live handle and `out` writable.
 */
enum BimdpStatus bimdp_bilevel_render_ascii(const struct BimdpBilevel *policy,
                                            uint64_t seed,
                                            char **out);

/**
 * Low-level policies solved so far.
 *
 * # Safety
 * `policy` must be a live handle.
 */
size_t bimdp_bilevel_ll_solve_count(const struct BimdpBilevel *policy);

/**
 * # Safety
 * `policy` must be null or a handle from this library not yet freed.
 */
void bimdp_bilevel_free(struct BimdpBilevel *policy);

/**
 * # Safety
 * `s` must be null or a string returned by this library not yet freed.
 */
void bimdp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BIMDP_H */
