//! C ABI over `sphere_fv`.
//!
//! Meshes and solvers are opaque handles owned by the caller and released
//! with their `_free` function. Every fallible call returns an [`SfvStatus`];
//! on failure [`sfv_last_error_message`] describes the error. Outputs are
//! written through pointers only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use sphere_fv::flux::{check_compatibility, FluxField};
use sphere_fv::geometry::Vec3;
use sphere_fv::mesh::{build_web_mesh, CoarseningRule, WebMesh};
use sphere_fv::scheme::{CellState, FiniteVolume, NumericalFluxKind, SchemeConfig, SchemeError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    MeshError = 3,
    SchemeError = 4,
    CflViolation = 5,
    NonFinite = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfvFluxKind {
    Linear = 0,
    Burgers = 1,
    Trig = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfvNumericalFlux {
    Godunov = 0,
    LaxFriedrichs = 1,
}

/// Scheme parameters for [`sfv_solver_new`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SfvSchemeParams {
    pub flux: SfvFluxKind,
    /// Axis `c` of the flux `f(u) = profile(u) c`.
    pub axis: [f64; 3],
    pub numerical_flux: SfvNumericalFlux,
    /// 1 or 2.
    pub order: u32,
    pub cfl: f64,
}

pub struct SfvMesh {
    mesh: Arc<WebMesh>,
}

pub struct SfvSolver {
    fv: FiniteVolume,
    state: CellState,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl ToString) {
    let c = CString::new(msg.to_string().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(SfvStatus, String);

impl From<SchemeError> for Failure {
    fn from(e: SchemeError) -> Self {
        let status = match e {
            SchemeError::CflViolation { .. } => SfvStatus::CflViolation,
            SchemeError::NonFinite { .. } => SfvStatus::NonFinite,
            SchemeError::InvalidConfig(_) | SchemeError::StateLength { .. } => SfvStatus::InvalidArgument,
            _ => SfvStatus::SchemeError,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl ToString) -> Failure {
    Failure(SfvStatus::InvalidArgument, msg.to_string())
}

/// Runs `f`, mapping errors and panics to a status and recording the message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SfvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SfvStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SfvStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(SfvStatus::NullPointer, "null handle".into()))
}

unsafe fn deref_mut<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure(SfvStatus::NullPointer, "null pointer".into()))
}

/// Message of the last failed call on this thread. Valid until the next
/// failing call on the same thread; never null.
#[no_mangle]
pub extern "C" fn sfv_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a web mesh with `n_bands` latitude bands and `n_lon_equator`
/// equatorial cells, halving longitude counts where the cell aspect ratio
/// falls below `merge_threshold`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sfv_mesh_new(
    n_bands: usize,
    n_lon_equator: usize,
    merge_threshold: f64,
    out: *mut *mut SfvMesh,
) -> SfvStatus {
    guard(|| {
        let out = deref_mut(out)?;
        let rule = CoarseningRule::from_threshold(merge_threshold).map_err(invalid)?;
        let mesh =
            build_web_mesh(n_bands, n_lon_equator, rule).map_err(|e| Failure(SfvStatus::MeshError, e.to_string()))?;
        *out = Box::into_raw(Box::new(SfvMesh { mesh: Arc::new(mesh) }));
        Ok(())
    })
}

/// # Safety
/// `mesh` must come from [`sfv_mesh_new`] and not be used afterwards. Null
/// is ignored.
#[no_mangle]
pub unsafe extern "C" fn sfv_mesh_free(mesh: *mut SfvMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// # Safety
/// `mesh` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sfv_mesh_cell_count(mesh: *const SfvMesh, out: *mut usize) -> SfvStatus {
    guard(|| {
        let m = deref(mesh)?;
        *deref_mut(out)? = m.mesh.n_cells();
        Ok(())
    })
}

/// Sum of the cell areas.
///
/// # Safety
/// `mesh` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sfv_mesh_total_area(mesh: *const SfvMesh, out: *mut f64) -> SfvStatus {
    guard(|| {
        let m = deref(mesh)?;
        *deref_mut(out)? = m.mesh.total_area();
        Ok(())
    })
}

/// Copies the cell areas into `areas`, which must hold exactly the cell count.
///
/// # Safety
/// `mesh` must be a live handle and `areas` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn sfv_mesh_cell_areas(mesh: *const SfvMesh, areas: *mut f64, len: usize) -> SfvStatus {
    guard(|| {
        let m = deref(mesh)?;
        let dst = out_slice(areas, len, m.mesh.n_cells())?;
        for (d, c) in dst.iter_mut().zip(m.mesh.cells()) {
            *d = c.area;
        }
        Ok(())
    })
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, expected: usize) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(Failure(SfvStatus::NullPointer, "null buffer".into()));
    }
    if len != expected {
        return Err(invalid(format!("buffer holds {len} values, expected {expected}")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn flux_field(kind: SfvFluxKind, axis: [f64; 3]) -> FluxField {
    let c = Vec3::new(axis[0], axis[1], axis[2]);
    match kind {
        SfvFluxKind::Linear => FluxField::linear(c),
        SfvFluxKind::Burgers => FluxField::burgers(c),
        SfvFluxKind::Trig => FluxField::trig(c),
    }
}

/// Creates a solver on `mesh` with the zero state at time 0. The mesh handle
/// may be freed afterwards.
///
/// # Safety
/// `mesh` must be a live handle, `params` and `out` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sfv_solver_new(
    mesh: *const SfvMesh,
    params: *const SfvSchemeParams,
    out: *mut *mut SfvSolver,
) -> SfvStatus {
    guard(|| {
        let m = deref(mesh)?;
        let p = *deref(params)?;
        let out = deref_mut(out)?;
        if !p.axis.iter().all(|v| v.is_finite()) {
            return Err(invalid("axis must be finite"));
        }
        let kind = match p.numerical_flux {
            SfvNumericalFlux::Godunov => NumericalFluxKind::Godunov,
            SfvNumericalFlux::LaxFriedrichs => NumericalFluxKind::LaxFriedrichs,
        };
        let cfg = match p.order {
            1 => SchemeConfig::first_order(kind, p.cfl),
            2 => SchemeConfig::second_order(kind, p.cfl),
            o => return Err(invalid(format!("order must be 1 or 2, got {o}"))),
        };
        let fv = FiniteVolume::new(Arc::clone(&m.mesh), flux_field(p.flux, p.axis), cfg)?.with_value_range(0.0, 0.0);
        let state = CellState::constant(Arc::clone(&m.mesh), 0.0);
        *out = Box::into_raw(Box::new(SfvSolver { fv, state }));
        Ok(())
    })
}

/// # Safety
/// `solver` must come from [`sfv_solver_new`] and not be used afterwards.
/// Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sfv_solver_free(solver: *mut SfvSolver) {
    if !solver.is_null() {
        drop(Box::from_raw(solver));
    }
}

/// Replaces the state. The value range used for time step limits is frozen
/// at the range of `u`.
///
/// # Safety
/// `solver` must be a live handle and `u` valid for `len` reads.
#[no_mangle]
pub unsafe extern "C" fn sfv_solver_set_state(solver: *mut SfvSolver, u: *const f64, len: usize, t: f64) -> SfvStatus {
    guard(|| {
        let s = deref_mut(solver)?;
        if u.is_null() {
            return Err(Failure(SfvStatus::NullPointer, "null buffer".into()));
        }
        if !t.is_finite() {
            return Err(invalid("time must be finite"));
        }
        let values = std::slice::from_raw_parts(u, len).to_vec();
        let state = CellState::new(Arc::clone(s.fv.mesh()), values, t)?;
        let (lo, hi) = state.min_max();
        s.fv.set_value_range(lo, hi);
        s.state = state;
        Ok(())
    })
}

/// # Safety
/// `solver` must be a live handle and `u` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn sfv_solver_get_state(solver: *const SfvSolver, u: *mut f64, len: usize) -> SfvStatus {
    guard(|| {
        let s = deref(solver)?;
        out_slice(u, len, s.state.u.len())?.copy_from_slice(&s.state.u);
        Ok(())
    })
}

/// Largest stable time step for the current state.
///
/// # Safety
/// `solver` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sfv_solver_cfl_dt(solver: *const SfvSolver, out: *mut f64) -> SfvStatus {
    guard(|| {
        let s = deref(solver)?;
        *deref_mut(out)? = s.fv.cfl_dt(&s.state)?;
        Ok(())
    })
}

/// One step of size `dt`. Steps above the CFL limit are refused with
/// `CflViolation` and leave the state unchanged.
///
/// # Safety
/// `solver` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sfv_solver_step(solver: *mut SfvSolver, dt: f64) -> SfvStatus {
    guard(|| {
        let s = deref_mut(solver)?;
        s.state = s.fv.step(&s.state, dt)?;
        Ok(())
    })
}

/// Advances to time `t_end` with CFL-limited steps, landing on it exactly.
/// `steps` may be null; otherwise it receives the number of steps taken.
/// On error the state stays at the last good step.
///
/// # Safety
/// `solver` must be a live handle; `steps` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sfv_solver_advance_to(solver: *mut SfvSolver, t_end: f64, steps: *mut usize) -> SfvStatus {
    guard(|| {
        let s = deref_mut(solver)?;
        if !(t_end.is_finite() && t_end >= s.state.t) {
            return Err(invalid(format!("t_end {t_end} is before the current time {}", s.state.t)));
        }
        let mut last = s.state.clone();
        let traj = s.fv.run(s.state.clone(), t_end - s.state.t, 1, |ev| last = ev.next.clone());
        if !steps.is_null() {
            *steps = traj.steps;
        }
        match traj.error {
            None => {
                s.state = traj.states.into_iter().last().expect("run keeps the initial state");
                Ok(())
            }
            Some(e) => {
                s.state = last;
                Err(e.into())
            }
        }
    })
}

/// `Σ area · u` of the current state.
///
/// # Safety
/// `solver` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sfv_solver_mass(solver: *const SfvSolver, out: *mut f64) -> SfvStatus {
    guard(|| {
        let s = deref(solver)?;
        *deref_mut(out)? = s.state.mass();
        Ok(())
    })
}

/// # Safety
/// `solver` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sfv_solver_time(solver: *const SfvSolver, out: *mut f64) -> SfvStatus {
    guard(|| {
        let s = deref(solver)?;
        *deref_mut(out)? = s.state.t;
        Ok(())
    })
}

/// Largest `|Σ s g_e(u)|` over cells and 16 values of `u` in `[-2, 2]`.
/// Zero up to roundoff for every built-in flux.
///
/// # Safety
/// `mesh` must be a live handle and `max_residual` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sfv_check_compat(
    mesh: *const SfvMesh,
    flux: SfvFluxKind,
    axis: *const f64,
    max_residual: *mut f64,
) -> SfvStatus {
    guard(|| {
        let m = deref(mesh)?;
        if axis.is_null() {
            return Err(Failure(SfvStatus::NullPointer, "null axis".into()));
        }
        let a = std::slice::from_raw_parts(axis, 3);
        let samples: Vec<f64> = (0..16).map(|i| -2.0 + 4.0 * i as f64 / 15.0).collect();
        let r = check_compatibility(&flux_field(flux, [a[0], a[1], a[2]]), &m.mesh, &samples);
        *deref_mut(max_residual)? = r.max_residual;
        Ok(())
    })
}
