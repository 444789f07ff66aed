#ifndef LVLAB_H
#define LVLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Which coefficient [`lv_system_set_field`] replaces.
typedef enum LvCoefficient {
  LV_COEFFICIENT_DIFFUSION = 0,
  LV_COEFFICIENT_RESOURCE = 1,
  LV_COEFFICIENT_COMPETITION = 2,
} LvCoefficient;

// Status codes returned by every fallible function.
typedef enum LvStatus {
  LV_STATUS_OK = 0,
  LV_STATUS_NULL_POINTER = 1,
  LV_STATUS_INVALID_ARGUMENT = 2,
  LV_STATUS_SOLVER_FAILURE = 3,
  LV_STATUS_PANIC = 4,
} LvStatus;

// Opaque grid handle.
typedef struct LvGrid LvGrid;

// Opaque system handle. Coefficients are kept as raw nodal values and
// validated when a solver runs.
typedef struct LvSystem LvSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `cap - 1` bytes) and returns the full message length.
// Pass a null `buf` to query the length.
//
// # Safety
// `buf` must be null or valid for `cap` bytes.
uintptr_t lv_last_error(char *buf, uintptr_t cap);

// Creates a uniform grid on `[0, extent[0]] (x [0, extent[1]])`.
// `dimension` is 1 or 2; `extent` and `nodes` hold `dimension` entries.
//
// # Safety
// `extent` and `nodes` must be valid for `dimension` elements and `out`
// must be a valid pointer.
enum LvStatus lv_grid_new(uintptr_t dimension,
                          const double *extent,
                          const uintptr_t *nodes,
                          struct LvGrid **out);

// # Safety
// `grid` must be null or a handle from [`lv_grid_new`] not yet freed.
void lv_grid_free(struct LvGrid *grid);

// Number of nodes, 0 for a null handle.
//
// # Safety
// `grid` must be null or a live handle.
uintptr_t lv_grid_node_count(const struct LvGrid *grid);

// Creates a `k`-species system with constant coefficients: `d` and `m`
// hold `k` values, `a` is the row-major `k x k` competition matrix. A zero
// diffusion rate makes the species immobile. `divergence` selects the
// form `div(d grad u)` instead of `d Δu`.
//
// # Safety
// `grid` must be a live handle, the arrays valid for the stated lengths
// and `out` a valid pointer.
enum LvStatus lv_system_new_constant(const struct LvGrid *grid,
                                     uintptr_t k,
                                     const double *d,
                                     const double *m,
                                     const double *a,
                                     bool divergence,
                                     struct LvSystem **out);

// Replaces one coefficient by nodal values (`len` must equal the node
// count). `j` is only read for [`LvCoefficient::Competition`].
//
// # Safety
// `system` must be a live handle and `values` valid for `len` elements.
enum LvStatus lv_system_set_field(struct LvSystem *system,
                                  enum LvCoefficient which,
                                  uintptr_t i,
                                  uintptr_t j,
                                  const double *values,
                                  uintptr_t len);

// # Safety
// `system` must be null or a handle not yet freed.
void lv_system_free(struct LvSystem *system);

// Number of species, 0 for a null handle.
//
// # Safety
// `system` must be null or a live handle.
uintptr_t lv_system_species_count(const struct LvSystem *system);

// Integrates from `initial` (k * n values) over `[0, t_end]` with step
// `dt`, adaptive or fixed, and writes the final state to `out_state`
// and the reached time to `out_time`.
//
// # Safety
// `system` must be a live handle; `initial` and `out_state` valid for
// `k * n` doubles; `out_time` valid.
enum LvStatus lv_simulate(const struct LvSystem *system,
                          const double *initial,
                          double t_end,
                          double dt,
                          bool adaptive,
                          double *out_state,
                          double *out_time);

// Newton iteration for a positive steady state. `guess` may be null for
// the default initial guess. Writes `k * n` values and the sup-norm
// residual.
//
// # Safety
// `system` must be a live handle; `guess` null or valid for `k * n`
// doubles; `out_state` valid for `k * n`; `out_residual` valid.
enum LvStatus lv_newton_equilibrium(const struct LvSystem *system,
                                    const double *guess,
                                    double *out_state,
                                    double *out_residual);

// Constant equilibrium bounds for a unit-diagonal matrix `a` (row-major
// `k x k`) and resource extrema. `out_feasible` is set to whether the
// bounds are positive and ordered.
//
// # Safety
// Arrays must be valid for the stated lengths; output pointers valid.
enum LvStatus lv_solve_bounds_f1(uintptr_t k,
                                 const double *a,
                                 const double *m_minus,
                                 const double *m_plus,
                                 double *out_cbar,
                                 double *out_cunder,
                                 bool *out_feasible);

// Searches a positive diagonal `q` with `q M + Mᵀ q` positive definite.
// Writes `q` (normalized to sum `k`), the smallest eigenvalue of the
// symmetric part and whether it clears `tolerance`. An infeasible result
// is not a proof that no such `q` exists.
//
// # Safety
// `m` must be valid for `k * k` doubles, `out_q` for `k`; other outputs
// valid.
enum LvStatus lv_diagonal_lyapunov_search(uintptr_t k,
                                          const double *m,
                                          double tolerance,
                                          double *out_q,
                                          double *out_lambda_min,
                                          bool *out_feasible);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LVLAB_H */
