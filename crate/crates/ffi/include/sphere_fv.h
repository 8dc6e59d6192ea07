#ifndef SPHERE_FV_H
#define SPHERE_FV_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SfvFluxKind {
  SFV_FLUX_KIND_LINEAR = 0,
  SFV_FLUX_KIND_BURGERS = 1,
  SFV_FLUX_KIND_TRIG = 2,
} SfvFluxKind;

typedef enum SfvNumericalFlux {
  SFV_NUMERICAL_FLUX_GODUNOV = 0,
  SFV_NUMERICAL_FLUX_LAX_FRIEDRICHS = 1,
} SfvNumericalFlux;

typedef enum SfvStatus {
  SFV_STATUS_OK = 0,
  SFV_STATUS_NULL_POINTER = 1,
  SFV_STATUS_INVALID_ARGUMENT = 2,
  SFV_STATUS_MESH_ERROR = 3,
  SFV_STATUS_SCHEME_ERROR = 4,
  SFV_STATUS_CFL_VIOLATION = 5,
  SFV_STATUS_NON_FINITE = 6,
  SFV_STATUS_PANIC = 7,
} SfvStatus;

typedef struct SfvMesh SfvMesh;

typedef struct SfvSolver SfvSolver;

// Scheme parameters for [`sfv_solver_new`].
typedef struct SfvSchemeParams {
  enum SfvFluxKind flux;
  // Axis `c` of the flux `f(u) = profile(u) c`.
  double axis[3];
  enum SfvNumericalFlux numerical_flux;
  // 1 or 2.
  uint32_t order;
  double cfl;
} SfvSchemeParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread. Valid until the next
// failing call on the same thread; never null.
const char *sfv_last_error_message(void);

// Builds a web mesh with `n_bands` latitude bands and `n_lon_equator`
// equatorial cells, halving longitude counts where the cell aspect ratio
// falls below `merge_threshold`.
//
// # Safety
// `out` must be valid for writes.
enum SfvStatus sfv_mesh_new(size_t n_bands,
                            size_t n_lon_equator,
                            double merge_threshold,
                            struct SfvMesh **out);

// # Safety
// `mesh` must come from [`sfv_mesh_new`] and not be used afterwards. Null
// is ignored.
void sfv_mesh_free(struct SfvMesh *mesh);

// # Safety
// `mesh` must be a live handle and `out` valid for writes.
enum SfvStatus sfv_mesh_cell_count(const struct SfvMesh *mesh, size_t *out);

// Sum of the cell areas.
//
// # Safety
// `mesh` must be a live handle and `out` valid for writes.
enum SfvStatus sfv_mesh_total_area(const struct SfvMesh *mesh, double *out);

// Copies the cell areas into `areas`, which must hold exactly the cell count.
//
// # Safety
// `mesh` must be a live handle and `areas` valid for `len` writes.
enum SfvStatus sfv_mesh_cell_areas(const struct SfvMesh *mesh, double *areas, size_t len);

// Creates a solver on `mesh` with the zero state at time 0. The mesh handle
// may be freed afterwards.
//
// # Safety
// `mesh` must be a live handle, `params` and `out` valid pointers.
enum SfvStatus sfv_solver_new(const struct SfvMesh *mesh,
                              const struct SfvSchemeParams *params,
                              struct SfvSolver **out);

// # Safety
// `solver` must come from [`sfv_solver_new`] and not be used afterwards.
// Null is ignored.
void sfv_solver_free(struct SfvSolver *solver);

// Replaces the state. The value range used for time step limits is frozen
// at the range of `u`.
//
// # Safety
// `solver` must be a live handle and `u` valid for `len` reads.
enum SfvStatus sfv_solver_set_state(struct SfvSolver *solver,
                                    const double *u,
                                    size_t len,
                                    double t);

// # Safety
// `solver` must be a live handle and `u` valid for `len` writes.
enum SfvStatus sfv_solver_get_state(const struct SfvSolver *solver, double *u, size_t len);

// Largest stable time step for the current state.
//
// # Safety
// `solver` must be a live handle and `out` valid for writes.
enum SfvStatus sfv_solver_cfl_dt(const struct SfvSolver *solver, double *out);

// One step of size `dt`. Steps above the CFL limit are refused with
// `CflViolation` and leave the state unchanged.
//
// # Safety
// `solver` must be a live handle.
enum SfvStatus sfv_solver_step(struct SfvSolver *solver, double dt);

// Advances to time `t_end` with CFL-limited steps, landing on it exactly.
// `steps` may be null; otherwise it receives the number of steps taken.
// On error the state stays at the last good step.
//
// # Safety
// `solver` must be a live handle; `steps` null or valid for writes.
enum SfvStatus sfv_solver_advance_to(struct SfvSolver *solver, double t_end, size_t *steps);

// `Σ area · u` of the current state.
//
// # Safety
// `solver` must be a live handle and `out` valid for writes.
enum SfvStatus sfv_solver_mass(const struct SfvSolver *solver, double *out);

// # Safety
// `solver` must be a live handle and `out` valid for writes.
enum SfvStatus sfv_solver_time(const struct SfvSolver *solver, double *out);

// Largest `|Σ s g_e(u)|` over cells and 16 values of `u` in `[-2, 2]`.
// Zero up to roundoff for every built-in flux.
//
// # Safety
// `mesh` must be a live handle and `max_residual` valid for writes.
enum SfvStatus sfv_check_compat(const struct SfvMesh *mesh,
                                enum SfvFluxKind flux,
                                const double *axis,
                                double *max_residual);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPHERE_FV_H */
