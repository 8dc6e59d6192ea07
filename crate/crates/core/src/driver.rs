//! Experiment orchestration shared by the command line tool and the tests:
//! initial data, exact solutions, runs and convergence studies.

use std::sync::Arc;

use thiserror::Error;

use crate::config::{
    FluxConfig, FluxKind, InitConfig, MeshConfig, RunConfig, TorusConfig, TorusFluxKind, TorusInitKind, TorusWeightKind,
};
use crate::diagnostics::{kruzkov_grid, max_entropy_residual, DiagnosticsReport};
use crate::flux::{check_compatibility, CompatibilityReport, FluxField};
use crate::fmt::fmt_f64;
use crate::geometry::{great_circle_distance, rotate, sph_to_cart, SpherePoint, UnitVec3, Vec3};
use crate::mesh::{build_web_mesh, CellKind, CoarseningRule, WebMesh};
use crate::quadrature::GaussLegendre;
use crate::scheme::{CellState, FiniteVolume, SchemeConfig, SchemeError};
use crate::torus1d::{ConvexFlux, TorusError, TorusInit, TorusProblem, Weight};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DriverError {
    /// Detected before any computation.
    #[error("{0}")]
    Setup(String),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Torus(#[from] TorusError),
}

/// Gauss–Legendre order per direction for cell averages.
pub const CELL_QUADRATURE_ORDER: usize = 6;

/// Number of Kruzkov constants used for the entropy residual column.
pub const KRUZKOV_GRID_SIZE: usize = 16;

/// Intrinsic initial data, a function of the point on the sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialData(pub InitConfig);

impl InitialData {
    pub fn eval(&self, x: Vec3) -> f64 {
        let bump = |lambda: f64, phi: f64, kappa: f64| {
            let c = sph_to_cart(SpherePoint::new(lambda, phi)).as_vec();
            let d = great_circle_distance(x, c);
            (-kappa * d * d).exp()
        };
        match self.0 {
            InitConfig::Constant { value } => value,
            InitConfig::GaussianBump { center_lambda, center_phi, kappa, amplitude, background } => {
                background + amplitude * bump(center_lambda, center_phi, kappa)
            }
            InitConfig::BandStep { phi_lo, phi_hi, inside, outside } => {
                let phi = x.x3.clamp(-1.0, 1.0).asin();
                if phi >= phi_lo && phi <= phi_hi {
                    inside
                } else {
                    outside
                }
            }
            InitConfig::TwoBumps { center_lambda, center_phi, separation, kappa, amplitude, background } => {
                background
                    + amplitude
                        * (bump(center_lambda - 0.5 * separation, center_phi, kappa)
                            + bump(center_lambda + 0.5 * separation, center_phi, kappa))
            }
        }
    }

    /// Cell averages on `mesh`. Constant data is reproduced exactly.
    pub fn cell_averages(&self, mesh: &WebMesh) -> Vec<f64> {
        if let InitConfig::Constant { value } = self.0 {
            return vec![value; mesh.n_cells()];
        }
        cell_averages(mesh, |x| self.eval(x), CELL_QUADRATURE_ORDER)
    }
}

/// Cell averages of `f` by a tensor Gauss–Legendre rule in `(λ, sin φ)`, in
/// which the area element is `dλ dz`.
pub fn cell_averages(mesh: &WebMesh, f: impl Fn(Vec3) -> f64 + Sync, order: usize) -> Vec<f64> {
    use rayon::prelude::*;
    let gl = GaussLegendre::new(order);
    mesh.cells()
        .par_iter()
        .map(|c| {
            let (l0, l1) = match c.kind {
                CellKind::Quad => (c.lambda_w, c.lambda_e),
                _ => (-std::f64::consts::PI, std::f64::consts::PI),
            };
            let (z0, z1) = (c.phi_s.sin(), c.phi_n.sin());
            let (mut s, mut w) = (0.0, 0.0);
            for (z, wz) in gl.on_interval(z0, z1) {
                let r = (1.0 - z * z).max(0.0).sqrt();
                for (l, wl) in gl.on_interval(l0, l1) {
                    let x = Vec3::new(r * l.cos(), r * l.sin(), z);
                    s += wz * wl * f(x);
                    w += wz * wl;
                }
            }
            s / w
        })
        .collect()
}

/// Exact solution of solid-body transport with `f(u) = u c`: the velocity is
/// `x × c`, so data is carried rigidly about `c` at angular speed `|c|`.
pub fn rotated_solution(init: InitialData, axis: Vec3, t: f64) -> impl Fn(Vec3) -> f64 + Sync {
    let k = UnitVec3::new_normalize(axis).expect("rotation axis must be non-zero");
    let angle = axis.norm() * t;
    move |x| init.eval(rotate(x, k, angle))
}

pub fn build_mesh(cfg: &MeshConfig) -> Result<WebMesh, DriverError> {
    let rule = CoarseningRule::from_threshold(cfg.merge_threshold).map_err(|e| DriverError::Setup(e.to_string()))?;
    build_web_mesh(cfg.n_bands, cfg.n_lon_equator, rule).map_err(|e| DriverError::Setup(e.to_string()))
}

pub fn build_flux(cfg: &FluxConfig) -> FluxField {
    let c = cfg.unit_axis();
    match cfg.kind {
        FluxKind::Linear | FluxKind::CustomAxis => FluxField::linear(c),
        FluxKind::Burgers => FluxField::burgers(c),
        FluxKind::Trig => FluxField::trig(c),
        FluxKind::Projected => FluxField::tangent(move |x, u| u * (c - c.dot(x) * x)),
    }
}

/// The scheme of a run configuration on `mesh`, its Lipschitz range frozen
/// at the range of `initial`.
pub fn build_scheme(cfg: &RunConfig, mesh: Arc<WebMesh>, initial: &CellState) -> Result<FiniteVolume, DriverError> {
    let sc = SchemeConfig {
        numerical_flux: cfg.scheme.numerical_flux,
        order: cfg.scheme.order,
        cfl: cfg.scheme.cfl,
        ..SchemeConfig::default()
    };
    let fv = FiniteVolume::new(mesh, build_flux(&cfg.flux), sc).map_err(|e| match e {
        SchemeError::NonGradientFlux => {
            DriverError::Setup(format!("flux `{}` cannot drive the scheme; use check-compat", cfg.flux.kind.as_str()))
        }
        other => DriverError::Setup(other.to_string()),
    })?;
    let (lo, hi) = initial.min_max();
    Ok(fv.with_value_range(lo, hi))
}

/// Everything produced by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub mesh: Arc<WebMesh>,
    pub states: Vec<CellState>,
    pub diagnostics: DiagnosticsReport,
    pub steps: usize,
    /// Set if the run stopped early; the outputs then cover what was reached.
    pub error: Option<SchemeError>,
}

/// Checks everything that can be checked without time stepping.
pub fn prepare_run(cfg: &RunConfig) -> Result<(FiniteVolume, CellState), DriverError> {
    let mesh = Arc::new(build_mesh(&cfg.mesh)?);
    let init = InitialData(cfg.init);
    let u0 = init.cell_averages(&mesh);
    let s0 = CellState::new(Arc::clone(&mesh), u0, 0.0)?;
    let fv = build_scheme(cfg, mesh, &s0)?;
    Ok((fv, s0))
}

/// Runs the configured experiment, recording diagnostics at every output
/// time. The entropy residual column holds the largest Kruzkov residual of
/// the step that lands on that output time (0 for the initial row).
pub fn run_experiment(fv: &FiniteVolume, s0: CellState, cfg: &RunConfig) -> RunOutput {
    let (lo, hi) = s0.min_max();
    let ks = kruzkov_grid(lo, hi, KRUZKOV_GRID_SIZE);
    let mut diagnostics = DiagnosticsReport::default();
    let mut row_error = None;
    match DiagnosticsReport::row(fv, &s0, 0.0) {
        Ok(r) => diagnostics.push(r),
        Err(e) => row_error = Some(e),
    }
    let mut pending: Vec<f64> = Vec::new();
    let traj = fv.run(s0, cfg.time.t_end, cfg.time.n_outputs, |ev| {
        if ev.is_output {
            let r = max_entropy_residual(fv, ev.previous, ev.next, ev.dt, &ks).unwrap_or(f64::NAN);
            pending.push(r);
        }
    });
    for (state, res) in traj.states.iter().skip(1).zip(&pending) {
        match DiagnosticsReport::row(fv, state, *res) {
            Ok(r) => diagnostics.push(r),
            Err(e) => row_error = row_error.or(Some(e)),
        }
    }
    RunOutput {
        mesh: Arc::clone(fv.mesh()),
        states: traj.states,
        diagnostics,
        steps: traj.steps,
        error: traj.error.or(row_error),
    }
}

/// `cell_id,lambda_center,phi_center,u`.
pub fn state_csv(state: &CellState) -> String {
    let mut out = String::from("cell_id,lambda_center,phi_center,u\n");
    for (c, u) in state.mesh().cells().iter().zip(&state.u) {
        let p = c.center();
        out.push_str(&format!("{},{},{},{}\n", c.id, fmt_f64(p.lambda), fmt_f64(p.phi), fmt_f64(*u)));
    }
    out
}

/// Maximum compatibility residual over 16 values of `u` in `[-2, 2]`.
pub fn compatibility_report(cfg: &RunConfig) -> Result<CompatibilityReport, DriverError> {
    let mesh = build_mesh(&cfg.mesh)?;
    let samples: Vec<f64> = (0..16).map(|i| -2.0 + 4.0 * i as f64 / 15.0).collect();
    Ok(check_compatibility(&build_flux(&cfg.flux), &mesh, &samples))
}

pub const COMPATIBILITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub n_bands: usize,
    pub n_lon_equator: usize,
    pub l1_error: f64,
    pub observed_order: Option<f64>,
}

/// `L¹` errors of the configured scheme against the exact rotated solution
/// at `time.t_end`, one row per resolution.
pub fn convergence_study(cfg: &RunConfig, resolutions: &[(usize, usize)]) -> Result<Vec<ConvergenceRow>, DriverError> {
    if !matches!(cfg.flux.kind, FluxKind::Linear | FluxKind::CustomAxis) {
        return Err(DriverError::Setup("convergence studies need a linear flux".into()));
    }
    // Validate every resolution before running any of them.
    let meshes: Vec<Arc<WebMesh>> = resolutions
        .iter()
        .map(|&(nb, nl)| build_mesh(&MeshConfig { n_bands: nb, n_lon_equator: nl, ..cfg.mesh }).map(Arc::new))
        .collect::<Result<_, _>>()?;
    let init = InitialData(cfg.init);
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for (mesh, &(nb, nl)) in meshes.into_iter().zip(resolutions) {
        let s0 = CellState::new(Arc::clone(&mesh), init.cell_averages(&mesh), 0.0)?;
        let fv = build_scheme(cfg, Arc::clone(&mesh), &s0)?;
        let traj = fv.run(s0, cfg.time.t_end, 1, |_| {});
        if let Some(e) = traj.error {
            return Err(e.into());
        }
        let last = traj.states.last().expect("run keeps the initial state");
        let exact = cell_averages(&mesh, rotated_solution(init, cfg.flux.unit_axis(), cfg.time.t_end), CELL_QUADRATURE_ORDER);
        let err: f64 =
            mesh.cells().iter().zip(last.u.iter().zip(&exact)).map(|(c, (a, b))| c.area * (a - b).abs()).sum();
        let observed_order = rows.last().map(|p| (p.l1_error / err).ln() / (nl as f64 / p.n_lon_equator as f64).ln());
        rows.push(ConvergenceRow { n_bands: nb, n_lon_equator: nl, l1_error: err, observed_order });
    }
    Ok(rows)
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from("resolution,l1_error,observed_order\n");
    for r in rows {
        let o = r.observed_order.map_or(String::new(), fmt_f64);
        out.push_str(&format!("{}x{},{},{}\n", r.n_bands, r.n_lon_equator, fmt_f64(r.l1_error), o));
    }
    out
}

pub fn torus_problem(cfg: &TorusConfig) -> Result<TorusProblem, TorusError> {
    let flux = match cfg.flux {
        TorusFluxKind::Burgers => ConvexFlux::burgers(),
        TorusFluxKind::Exp => ConvexFlux::exponential(),
        TorusFluxKind::Cubic => ConvexFlux::cubic(),
    };
    let weight = match cfg.weight {
        TorusWeightKind::One => Weight::unit(),
        TorusWeightKind::Sine { amplitude } => Weight::sine(amplitude),
    };
    let init = match cfg.init {
        TorusInitKind::Sine { mean, amplitude } => TorusInit::Sine { mean, amplitude },
        TorusInitKind::Step { high, low } => TorusInit::Step { high, low },
        TorusInitKind::Constant { value } => TorusInit::Constant(value),
    };
    TorusProblem::new(flux, weight, init)
}
