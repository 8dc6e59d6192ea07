//! Total-flux finite volume scheme on the web mesh.
//!
//! With time faces carrying `area(K) u_K`, the update of a cell is
//!
//! ```text
//! area(K) u_K^{n+1} = area(K) u_K^n - dt * Σ_{(e,s) ∈ ∂K} s q_e(u_left, u_right)
//! ```
//!
//! where `q_e` is a monotone two-point flux built on the edge's exact total
//! flux function `g_e`. Each edge flux is evaluated once and consumed by both
//! of its cells with opposite signs.
//!
//! The balance is accumulated in incremental form, `Σ s (q_e - g_e(u_K))`.
//! For a gradient flux `Σ s g_e(c)` vanishes identically for every constant
//! `c`, so this is the same scheme; in floating point it makes constant
//! states exact fixed points.

use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use thiserror::Error;

use crate::flux::{lipschitz_bound, EdgeFlux, EdgeFunction, FluxField};
use crate::geometry::lambda_diff;
use crate::mesh::{Side, WebMesh};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("invalid scheme configuration: {0}")]
    InvalidConfig(String),
    #[error("time step {dt} exceeds the CFL limit {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("all edge Lipschitz bounds vanish; no CFL restriction")]
    DegenerateFlux,
    #[error("Lax-Friedrichs speed {speed} is below the local Lipschitz constant {lipschitz}")]
    SpeedTooSmall { speed: f64, lipschitz: f64 },
    #[error("the finite volume scheme needs a gradient flux")]
    NonGradientFlux,
    #[error("state does not belong to this mesh")]
    MeshMismatch,
    #[error("state has {got} values, mesh has {expected} cells")]
    StateLength { got: usize, expected: usize },
    #[error("non-finite value in cell {cell}")]
    NonFinite { cell: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumericalFluxKind {
    Godunov,
    LaxFriedrichs,
}

impl NumericalFluxKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NumericalFluxKind::Godunov => "godunov",
            NumericalFluxKind::LaxFriedrichs => "lax_friedrichs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Limiter {
    Minmod,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub numerical_flux: NumericalFluxKind,
    /// 1 (first order) or 2 (MUSCL–Hancock).
    pub order: u8,
    pub cfl: f64,
    pub limiter: Limiter,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self { numerical_flux: NumericalFluxKind::Godunov, order: 1, cfl: 0.9, limiter: Limiter::Minmod }
    }
}

impl SchemeConfig {
    pub fn first_order(numerical_flux: NumericalFluxKind, cfl: f64) -> Self {
        Self { numerical_flux, order: 1, cfl, limiter: Limiter::Minmod }
    }

    pub fn second_order(numerical_flux: NumericalFluxKind, cfl: f64) -> Self {
        Self { numerical_flux, order: 2, cfl, limiter: Limiter::Minmod }
    }

    pub fn validate(&self) -> Result<(), SchemeError> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(SchemeError::InvalidConfig(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        match self.order {
            1 => Ok(()),
            2 if self.cfl <= 0.5 => Ok(()),
            2 => Err(SchemeError::InvalidConfig(format!("second order requires cfl <= 0.5, got {}", self.cfl))),
            o => Err(SchemeError::InvalidConfig(format!("order must be 1 or 2, got {o}"))),
        }
    }
}

/// Cell averages of the unknown at one time level.
#[derive(Debug, Clone)]
pub struct CellState {
    mesh: Arc<WebMesh>,
    pub u: Vec<f64>,
    pub t: f64,
}

impl CellState {
    pub fn new(mesh: Arc<WebMesh>, u: Vec<f64>, t: f64) -> Result<Self, SchemeError> {
        if u.len() != mesh.n_cells() {
            return Err(SchemeError::StateLength { got: u.len(), expected: mesh.n_cells() });
        }
        if let Some(cell) = u.iter().position(|v| !v.is_finite()) {
            return Err(SchemeError::NonFinite { cell });
        }
        Ok(Self { mesh, u, t })
    }

    pub fn constant(mesh: Arc<WebMesh>, value: f64) -> Self {
        let n = mesh.n_cells();
        Self { mesh, u: vec![value; n], t: 0.0 }
    }

    pub fn mesh(&self) -> &Arc<WebMesh> {
        &self.mesh
    }

    /// `Σ area(K) u_K`.
    pub fn mass(&self) -> f64 {
        self.mesh.cells().iter().zip(&self.u).map(|(c, u)| c.area * u).sum()
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn same_mesh(&self, other: &CellState) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh) || *self.mesh == *other.mesh
    }
}

const GODUNOV_SAMPLES: usize = 129;
const GODUNOV_TOL: f64 = 1e-12;

/// Godunov flux: `min g` over `[a, b]` if `a <= b`, else `max g` over `[b, a]`.
///
/// If `g` reports its stationary points the extremum is taken over those and
/// the end points. Otherwise it is located by sampling 129 equally spaced
/// points and refining around the best sample by golden-section search. No
/// convexity is assumed.
pub fn godunov_numflux(g: &impl EdgeFunction, a: f64, b: f64) -> f64 {
    if a == b {
        return g.value(a);
    }
    // Search for the minimum of s * g, s = +1 (a < b) or -1 (a > b).
    let (lo, hi, s) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut best = (s * g.value(lo)).min(s * g.value(hi));
    if g.stationary_points(lo, hi, &mut |w| best = best.min(s * g.value(w))) {
        return s * best;
    }
    godunov_sampled(g, lo, hi, s)
}

fn godunov_sampled(g: &impl EdgeFunction, lo: f64, hi: f64, s: f64) -> f64 {
    let n = GODUNOV_SAMPLES - 1;
    let h = (hi - lo) / n as f64;
    let node = |i: usize| if i == n { hi } else { lo + i as f64 * h };
    let mut best_i = 0;
    let mut best = s * g.value(lo);
    for i in 1..=n {
        let v = s * g.value(node(i));
        if v < best {
            best = v;
            best_i = i;
        }
    }
    // Refine inside the neighbouring sample intervals. At an end point only
    // refine if the function still decreases into the interval.
    let bracket = if best_i == 0 {
        (s * g.derivative(lo) < 0.0).then(|| (lo, node(1)))
    } else if best_i == n {
        (s * g.derivative(hi) > 0.0).then(|| (node(n - 1), hi))
    } else {
        Some((node(best_i - 1), node(best_i + 1)))
    };
    if let Some((x0, x1)) = bracket {
        let (w, v) = golden_min(|w| s * g.value(w), x0, x1, GODUNOV_TOL);
        if v < best && w >= lo && w <= hi {
            best = v;
        }
    }
    s * best
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const R: f64 = 0.618_033_988_749_894_9;
    let mut c = b - R * (b - a);
    let mut d = a + R * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - R * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + R * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Lax–Friedrichs flux `(g(a) + g(b)) / 2 - speed (b - a) / 2`.
///
/// Fails if `speed` is below `|g'|` at either argument, in which case the
/// flux would not be monotone.
pub fn lax_friedrichs_numflux(g: &impl EdgeFunction, a: f64, b: f64, speed: f64) -> Result<f64, SchemeError> {
    let lip = g.derivative(a).abs().max(g.derivative(b).abs());
    if lip > speed * (1.0 + 1e-12) {
        return Err(SchemeError::SpeedTooSmall { speed, lipschitz: lip });
    }
    Ok(0.5 * (g.value(a) + g.value(b)) - 0.5 * speed * (b - a))
}

/// A trajectory produced by [`FiniteVolume::run`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// States at the output times, starting with the initial state.
    pub states: Vec<CellState>,
    pub steps: usize,
    /// Set when the run stopped early; `states` then holds what was reached.
    pub error: Option<SchemeError>,
}

/// Passed to the observer of [`FiniteVolume::run`] after each step.
pub struct StepEvent<'a> {
    pub previous: &'a CellState,
    pub next: &'a CellState,
    pub dt: f64,
    /// Whether `next` lands on an output time.
    pub is_output: bool,
}

#[derive(Debug, Clone)]
struct Stencil {
    east: usize,
    west: usize,
    width: f64,
    phi_bar: f64,
    north: Vec<usize>,
    north_phi: f64,
    south: Vec<usize>,
    south_phi: f64,
    /// `(d_lambda, d_phi)` from the cell centroid to each boundary edge
    /// midpoint, in boundary order.
    offsets: Vec<(f64, f64)>,
}

/// Per-edge Lipschitz bounds and the value range they were computed on.
type LipschitzCache = ((f64, f64), Arc<Vec<f64>>);

/// The finite volume discretization of one flux field on one mesh.
pub struct FiniteVolume {
    mesh: Arc<WebMesh>,
    flux: FluxField,
    cfg: SchemeConfig,
    edge_fns: Vec<EdgeFlux>,
    value_range: Option<(f64, f64)>,
    lips_cache: Mutex<Option<LipschitzCache>>,
    /// `None` for polar caps.
    stencils: Vec<Option<Stencil>>,
    /// Trace slots `(left, right)` of each edge.
    edge_slots: Vec<(usize, usize)>,
}

impl std::fmt::Debug for FiniteVolume {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FiniteVolume")
            .field("cells", &self.mesh.n_cells())
            .field("cfg", &self.cfg)
            .field("value_range", &self.value_range)
            .finish()
    }
}

impl FiniteVolume {
    pub fn new(mesh: Arc<WebMesh>, flux: FluxField, cfg: SchemeConfig) -> Result<Self, SchemeError> {
        cfg.validate()?;
        let edge_fns = mesh
            .edges()
            .iter()
            .map(|e| flux.edge_flux_function(e).ok_or(SchemeError::NonGradientFlux))
            .collect::<Result<Vec<_>, _>>()?;

        let mut edge_slots = vec![(usize::MAX, usize::MAX); mesh.n_edges()];
        let mut next = 0;
        for k in 0..mesh.n_cells() {
            for (j, b) in mesh.boundary_unchecked(k).iter().enumerate() {
                if b.sign > 0 {
                    edge_slots[b.edge].0 = next + j;
                } else {
                    edge_slots[b.edge].1 = next + j;
                }
            }
            next += mesh.boundary_unchecked(k).len();
        }
        let stencils = build_stencils(&mesh);
        Ok(Self { mesh, flux, cfg, edge_fns, value_range: None, lips_cache: Mutex::new(None), stencils, edge_slots })
    }

    /// Freezes the value range used for Lipschitz bounds (CFL and
    /// Lax–Friedrichs speeds). With a frozen range every step applies the same
    /// monotone operator, whatever the state.
    pub fn with_value_range(mut self, lo: f64, hi: f64) -> Self {
        self.set_value_range(lo, hi);
        self
    }

    pub fn set_value_range(&mut self, lo: f64, hi: f64) {
        assert!(lo <= hi);
        self.value_range = Some((lo, hi));
    }

    pub fn mesh(&self) -> &Arc<WebMesh> {
        &self.mesh
    }

    pub fn flux(&self) -> &FluxField {
        &self.flux
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    pub fn edge_function(&self, edge: usize) -> &EdgeFlux {
        &self.edge_fns[edge]
    }

    pub(crate) fn check_state(&self, state: &CellState) -> Result<(), SchemeError> {
        if !(Arc::ptr_eq(&self.mesh, &state.mesh) || *self.mesh == *state.mesh) {
            return Err(SchemeError::MeshMismatch);
        }
        Ok(())
    }

    fn range_for(&self, state: &CellState) -> (f64, f64) {
        self.value_range.unwrap_or_else(|| state.min_max())
    }

    /// Per-edge Lipschitz bounds of `g_e` over `range`.
    pub fn edge_lipschitz(&self, range: (f64, f64)) -> Arc<Vec<f64>> {
        let mut cache = self.lips_cache.lock().expect("lipschitz cache poisoned");
        if let Some((r, lips)) = cache.as_ref() {
            if *r == range {
                return Arc::clone(lips);
            }
        }
        let lips: Arc<Vec<f64>> =
            Arc::new(self.edge_fns.par_iter().map(|g| lipschitz_bound(g, range.0, range.1)).collect());
        *cache = Some((range, Arc::clone(&lips)));
        lips
    }

    fn cfl_limit(&self, lips: &[f64]) -> Option<f64> {
        let mut limit = f64::INFINITY;
        for (k, cell) in self.mesh.cells().iter().enumerate() {
            let s: f64 = self.mesh.boundary_unchecked(k).iter().map(|b| lips[b.edge]).sum();
            if s > 0.0 {
                limit = limit.min(cell.area / s);
            }
        }
        limit.is_finite().then_some(self.cfg.cfl * limit)
    }

    /// Largest stable time step: `cfl * min_K area(K) / Σ_{e ∈ ∂K} Lip(g_e)`.
    pub fn cfl_dt(&self, state: &CellState) -> Result<f64, SchemeError> {
        self.check_state(state)?;
        let lips = self.edge_lipschitz(self.range_for(state));
        self.cfl_limit(&lips).ok_or(SchemeError::DegenerateFlux)
    }

    /// Two-point numerical flux of one edge, `q_e(a, b)`, with `speed` the
    /// Lax–Friedrichs dissipation coefficient.
    pub fn numerical_flux(&self, edge: usize, a: f64, b: f64, speed: f64) -> f64 {
        let g = &self.edge_fns[edge];
        match self.cfg.numerical_flux {
            NumericalFluxKind::Godunov => godunov_numflux(g, a, b),
            NumericalFluxKind::LaxFriedrichs => {
                // The speed bounds |g'| on the active range; the scheme only
                // evaluates inside that range.
                0.5 * (g.value(a) + g.value(b)) - 0.5 * speed * (b - a)
            }
        }
    }

    /// The numerical flux `q_e(a, b)` the scheme uses for steps from `state`.
    pub fn flux_evaluator(&self, state: &CellState) -> impl Fn(usize, f64, f64) -> f64 + Sync + '_ {
        let lips = self.edge_lipschitz(self.range_for(state));
        move |e, a, b| self.numerical_flux(e, a, b, lips[e])
    }

    /// Incremental cell balances `Σ s (q_e - g_e(u_K))` for given edge
    /// fluxes `q`.
    fn balances(&self, u: &[f64], q: &[f64]) -> Vec<f64> {
        let diffs: Vec<(f64, f64)> = self
            .mesh
            .edges()
            .par_iter()
            .enumerate()
            .map(|(i, e)| {
                let g = &self.edge_fns[i];
                (q[i] - g.value(u[e.left]), q[i] - g.value(u[e.right]))
            })
            .collect();
        (0..self.mesh.n_cells())
            .into_par_iter()
            .map(|k| {
                let mut acc = 0.0;
                for b in self.mesh.boundary_unchecked(k) {
                    if b.sign > 0 {
                        acc += diffs[b.edge].0;
                    } else {
                        acc -= diffs[b.edge].1;
                    }
                }
                acc
            })
            .collect()
    }

    /// `Σ_{(e,s) ∈ ∂K} s q_e(u_left, u_right)` for every cell, in incremental
    /// form. Equals `area(K) (u^{n+1} - u^n) / (-dt)` for a first-order step.
    pub fn flux_divergence(&self, state: &CellState) -> Result<Vec<f64>, SchemeError> {
        self.check_state(state)?;
        let q = self.flux_evaluator(state);
        let u = &state.u;
        let fluxes: Vec<f64> =
            self.mesh.edges().par_iter().enumerate().map(|(i, e)| q(i, u[e.left], u[e.right])).collect();
        Ok(self.balances(u, &fluxes))
    }

    fn checked_lips(&self, state: &CellState, dt: f64) -> Result<Arc<Vec<f64>>, SchemeError> {
        self.check_state(state)?;
        if !(dt >= 0.0 && dt.is_finite()) {
            return Err(SchemeError::CflViolation { dt, limit: f64::NAN });
        }
        let lips = self.edge_lipschitz(self.range_for(state));
        if let Some(limit) = self.cfl_limit(&lips) {
            if dt > limit * (1.0 + 1e-12) {
                return Err(SchemeError::CflViolation { dt, limit });
            }
        }
        Ok(lips)
    }

    fn finish(&self, state: &CellState, bal: Vec<f64>, dt: f64) -> Result<CellState, SchemeError> {
        let cells = self.mesh.cells();
        let u: Vec<f64> = state
            .u
            .iter()
            .zip(&bal)
            .zip(cells)
            .map(|((&u, &b), c)| if b == 0.0 { u } else { u - dt / c.area * b })
            .collect();
        if let Some(cell) = u.iter().position(|v| !v.is_finite()) {
            return Err(SchemeError::NonFinite { cell });
        }
        Ok(CellState { mesh: Arc::clone(&self.mesh), u, t: state.t + dt })
    }

    /// One first-order step with the configured numerical flux.
    pub fn step_first_order(&self, state: &CellState, dt: f64) -> Result<CellState, SchemeError> {
        let lips = self.checked_lips(state, dt)?;
        let u = &state.u;
        let q: Vec<f64> = self
            .mesh
            .edges()
            .par_iter()
            .enumerate()
            .map(|(i, e)| self.numerical_flux(i, u[e.left], u[e.right], lips[i]))
            .collect();
        let bal = self.balances(u, &q);
        self.finish(state, bal, dt)
    }

    /// One first-order step with a caller-supplied two-point flux
    /// `q(edge, a, b)`. No CFL check; intended for experiments and fixtures.
    pub fn step_with_flux(
        &self,
        state: &CellState,
        dt: f64,
        q: impl Fn(usize, f64, f64) -> f64 + Sync,
    ) -> Result<CellState, SchemeError> {
        self.check_state(state)?;
        let u = &state.u;
        let fluxes: Vec<f64> =
            self.mesh.edges().par_iter().enumerate().map(|(i, e)| q(i, u[e.left], u[e.right])).collect();
        let bal = self.balances(u, &fluxes);
        self.finish(state, bal, dt)
    }

    /// Reconstructed, half-step evolved, bounded traces of every cell at each
    /// of its boundary edges, in flat slot order.
    fn muscl_traces(&self, state: &CellState, dt: f64) -> Vec<f64> {
        let u = &state.u;
        let (gmin, gmax) = state.min_max();
        let cells = self.mesh.cells();
        let per_cell: Vec<Vec<f64>> = (0..self.mesh.n_cells())
            .into_par_iter()
            .map(|k| {
                let bnd = self.mesh.boundary_unchecked(k);
                let uk = u[k];
                let Some(st) = &self.stencils[k] else {
                    return vec![uk; bnd.len()];
                };
                let s_lambda = minmod((u[st.east] - uk) / st.width, (uk - u[st.west]) / st.width);
                let un = area_mean(cells, u, &st.north);
                let us = area_mean(cells, u, &st.south);
                let s_phi = minmod((un - uk) / (st.north_phi - st.phi_bar), (uk - us) / (st.phi_bar - st.south_phi));
                let mut traces: Vec<f64> = st.offsets.iter().map(|&(dl, dp)| uk + s_lambda * dl + s_phi * dp).collect();

                // Hancock predictor from the cell's own boundary balance.
                let mut bal = 0.0;
                for (b, &a) in bnd.iter().zip(&traces) {
                    let g = &self.edge_fns[b.edge];
                    bal += f64::from(b.sign) * (g.value(a) - g.value(uk));
                }
                let shift = -0.5 * dt / cells[k].area * bal;

                // Keep traces inside the local bounds and symmetric around
                // u_K within the global bounds; this keeps the update inside
                // [gmin, gmax] for cfl <= 1/2.
                let (mut lo, mut hi) = (uk, uk);
                for b in bnd {
                    let e = &self.mesh.edges()[b.edge];
                    let other = if e.left == k { e.right } else { e.left };
                    lo = lo.min(u[other]);
                    hi = hi.max(u[other]);
                }
                let r = (gmax - uk).min(uk - gmin).max(0.0);
                let lo = lo.max(uk - r);
                let hi = hi.min(uk + r);
                for a in &mut traces {
                    *a = (*a + shift).clamp(lo, hi);
                }
                traces
            })
            .collect();
        per_cell.into_iter().flatten().collect()
    }

    /// One MUSCL–Hancock step: minmod slopes in `lambda` and `phi`, a
    /// half-step predictor, then the conservative update with the evolved
    /// traces. Polar caps stay first order.
    pub fn step_muscl(&self, state: &CellState, dt: f64) -> Result<CellState, SchemeError> {
        let lips = self.checked_lips(state, dt)?;
        let traces = self.muscl_traces(state, dt);
        let q: Vec<f64> = self
            .edge_slots
            .par_iter()
            .enumerate()
            .map(|(i, &(l, r))| self.numerical_flux(i, traces[l], traces[r], lips[i]))
            .collect();
        let bal = self.balances(&state.u, &q);
        self.finish(state, bal, dt)
    }

    /// Steps with the configured order.
    pub fn step(&self, state: &CellState, dt: f64) -> Result<CellState, SchemeError> {
        if self.cfg.order == 2 {
            self.step_muscl(state, dt)
        } else {
            self.step_first_order(state, dt)
        }
    }

    /// Advances `initial` to `t_end`, recording `n_outputs` equally spaced
    /// states after the initial one. Time steps are clipped so that every
    /// output time is hit exactly.
    pub fn run(
        &self,
        initial: CellState,
        t_end: f64,
        n_outputs: usize,
        mut observer: impl FnMut(&StepEvent<'_>),
    ) -> Trajectory {
        let mut traj = Trajectory { states: vec![initial.clone()], steps: 0, error: None };
        if let Err(e) = self.check_state(&initial) {
            traj.error = Some(e);
            return traj;
        }
        if t_end <= 0.0 || n_outputs == 0 {
            return traj;
        }
        let t0 = initial.t;
        let mut state = initial;
        for k in 1..=n_outputs {
            let t_out = if k == n_outputs { t0 + t_end } else { t0 + t_end * k as f64 / n_outputs as f64 };
            while state.t < t_out {
                let dt_cfl = match self.cfl_dt(&state) {
                    Ok(dt) => dt,
                    Err(SchemeError::DegenerateFlux) => self.cfg.cfl * t_end,
                    Err(e) => {
                        traj.error = Some(e);
                        return traj;
                    }
                };
                let remaining = t_out - state.t;
                let landing = dt_cfl >= remaining * (1.0 - 1e-12);
                let dt = if landing { remaining } else { dt_cfl };
                if !(dt > 0.0) {
                    traj.error = Some(SchemeError::CflViolation { dt, limit: dt_cfl });
                    return traj;
                }
                let mut next = match self.step(&state, dt) {
                    Ok(s) => s,
                    Err(e) => {
                        traj.error = Some(e);
                        return traj;
                    }
                };
                if landing {
                    next.t = t_out;
                }
                traj.steps += 1;
                observer(&StepEvent { previous: &state, next: &next, dt, is_output: landing });
                state = next;
            }
            traj.states.push(state.clone());
        }
        traj
    }
}

fn minmod(a: f64, b: f64) -> f64 {
    if a > 0.0 && b > 0.0 {
        a.min(b)
    } else if a < 0.0 && b < 0.0 {
        a.max(b)
    } else {
        0.0
    }
}

fn area_mean(cells: &[crate::mesh::Cell], u: &[f64], ids: &[usize]) -> f64 {
    let (mut m, mut a) = (0.0, 0.0);
    for &i in ids {
        m += cells[i].area * u[i];
        a += cells[i].area;
    }
    m / a
}

fn build_stencils(mesh: &WebMesh) -> Vec<Option<Stencil>> {
    let cells = mesh.cells();
    (0..mesh.n_cells())
        .map(|k| {
            let c = &cells[k];
            if c.is_cap() {
                return None;
            }
            let nbs = mesh.neighbors(k).expect("valid cell");
            let pick = |side: Side| nbs.iter().filter(move |n| n.2 == side).map(|n| n.1);
            let east = pick(Side::East).next().expect("quad has an east neighbour");
            let west = pick(Side::West).next().expect("quad has a west neighbour");
            let north: Vec<usize> = pick(Side::North).collect();
            let south: Vec<usize> = pick(Side::South).collect();
            let lambda_c = 0.5 * (c.lambda_w + c.lambda_e);
            let phi_bar = c.centroid_phi();
            let offsets = mesh
                .boundary_unchecked(k)
                .iter()
                .map(|b| {
                    let m = mesh.edges()[b.edge].midpoint();
                    (lambda_diff(lambda_c, m.lambda), m.phi - phi_bar)
                })
                .collect();
            Some(Stencil {
                east,
                west,
                width: c.lambda_e - c.lambda_w,
                phi_bar,
                north_phi: cells[north[0]].centroid_phi(),
                south_phi: cells[south[0]].centroid_phi(),
                north,
                south,
                offsets,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flux::ScalarFn;
    use crate::geometry::Vec3;
    use crate::mesh::{build_web_mesh, CoarseningRule};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quarter() -> ScalarFn {
        ScalarFn::new(|w| w * w / 4.0, |w| w / 2.0)
    }

    /// Exhaustive extremum over a fine grid, independent of the solver.
    fn brute_godunov(g: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let n = 200_000;
        let (lo, hi) = (a.min(b), a.max(b));
        let vals = (0..=n).map(|i| g(lo + (hi - lo) * i as f64 / n as f64));
        if a <= b {
            vals.fold(f64::INFINITY, f64::min)
        } else {
            vals.fold(f64::NEG_INFINITY, f64::max)
        }
    }

    #[test]
    fn godunov_examples() {
        let g = quarter();
        assert_eq!(brute_godunov(|w| w * w / 4.0, 1.0, -1.0), 0.25);
        assert_eq!(godunov_numflux(&g, 1.0, -1.0), 0.25);
        assert_eq!(brute_godunov(|w| w * w / 4.0, -1.0, 1.0), 0.0);
        assert!(godunov_numflux(&g, -1.0, 1.0).abs() < 1e-24);
        for &u in &[-2.0, 0.0, 0.7] {
            assert_eq!(godunov_numflux(&g, u, u), g.eval(u));
        }
    }

    #[test]
    fn godunov_nonconvex_matches_brute_force() {
        let g = ScalarFn::new(|w| (3.0 * w).sin() + 0.1 * w, |w| 3.0 * (3.0 * w).cos() + 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let a = rng.gen_range(-3.0..3.0);
            let b = rng.gen_range(-3.0..3.0);
            let got = godunov_numflux(&g, a, b);
            let want = brute_godunov(|w| (3.0 * w).sin() + 0.1 * w, a, b);
            assert!((got - want).abs() < 1e-9, "a={a} b={b}: {got} vs {want}");
            // The refined value is never worse than the brute-force grid.
            if a < b {
                assert!(got <= want + 1e-15);
            } else {
                assert!(got >= want - 1e-15);
            }
        }
    }

    #[test]
    fn stationary_point_shortcut_matches_sampling() {
        let mesh = build_web_mesh(8, 16, CoarseningRule::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for flux in [FluxField::trig(Vec3::new(0.3, -0.7, 0.6)), FluxField::burgers(Vec3::new(1.0, 0.5, -0.2))] {
            for e in mesh.edges().iter().step_by(7) {
                let g = flux.edge_flux_function(e).unwrap();
                for _ in 0..20 {
                    let a = rng.gen_range(-4.0..4.0);
                    let b = rng.gen_range(-4.0..4.0);
                    let (lo, hi, s) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
                    let fast = godunov_numflux(&g, a, b);
                    let slow = godunov_sampled(&g, lo, hi, s);
                    assert!((fast - slow).abs() < 1e-12 * (1.0 + fast.abs()), "{fast} vs {slow}");
                }
            }
        }
    }

    #[test]
    fn lax_friedrichs_examples() {
        let g = quarter();
        assert_eq!(lax_friedrichs_numflux(&g, 0.3, 0.3, 1.0).unwrap(), g.eval(0.3));
        let zero = ScalarFn::zero();
        assert_eq!(lax_friedrichs_numflux(&zero, 1.0, 0.0, 1.0).unwrap(), 0.5);
        assert!(matches!(lax_friedrichs_numflux(&g, 4.0, 0.0, 1.0), Err(SchemeError::SpeedTooSmall { .. })));
        // Monotonicity by finite differences.
        let speed = 1.1;
        let d = 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let a = rng.gen_range(-2.0..2.0);
            let b = rng.gen_range(-2.0..2.0);
            let q = |a, b| lax_friedrichs_numflux(&g, a, b, speed).unwrap();
            assert!((q(a + d, b) - q(a - d, b)) / (2.0 * d) >= -1e-9);
            assert!((q(a, b + d) - q(a, b - d)) / (2.0 * d) <= 1e-9);
        }
    }

    #[test]
    fn config_validation() {
        assert!(SchemeConfig::second_order(NumericalFluxKind::Godunov, 0.6).validate().is_err());
        assert!(SchemeConfig::first_order(NumericalFluxKind::Godunov, 0.0).validate().is_err());
        assert!(SchemeConfig { order: 3, ..Default::default() }.validate().is_err());
        assert!(SchemeConfig::second_order(NumericalFluxKind::LaxFriedrichs, 0.5).validate().is_ok());
    }

    fn setup(nb: usize, nl: usize, flux: FluxField, cfg: SchemeConfig) -> FiniteVolume {
        let mesh = Arc::new(build_web_mesh(nb, nl, CoarseningRule::default()).unwrap());
        FiniteVolume::new(mesh, flux, cfg).unwrap()
    }

    fn random_state(fv: &FiniteVolume, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> CellState {
        let n = fv.mesh().n_cells();
        CellState::new(Arc::clone(fv.mesh()), (0..n).map(|_| rng.gen_range(lo..hi)).collect(), 0.0).unwrap()
    }

    #[test]
    fn constant_states_are_fixed_points() {
        for order in [1u8, 2] {
            let cfg = SchemeConfig { order, cfl: 0.5, ..Default::default() };
            let fv = setup(8, 16, FluxField::trig(Vec3::new(0.3, 0.4, 0.8)), cfg);
            let s0 = CellState::constant(Arc::clone(fv.mesh()), 0.8);
            let dt = fv.cfl_dt(&s0).unwrap();
            let s1 = fv.step(&s0, dt).unwrap();
            assert_eq!(s0.u, s1.u);
        }
    }

    #[test]
    fn cfl_dt_behaviour() {
        let zero = FluxField::linear(Vec3::ZERO);
        let fv = setup(8, 16, zero, SchemeConfig::default());
        let s = CellState::constant(Arc::clone(fv.mesh()), 1.0);
        assert_eq!(fv.cfl_dt(&s), Err(SchemeError::DegenerateFlux));

        let lin = FluxField::linear(Vec3::E3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = setup(16, 32, lin.clone(), SchemeConfig::first_order(NumericalFluxKind::Godunov, 0.9));
        let b = setup(32, 64, lin.clone(), SchemeConfig::first_order(NumericalFluxKind::Godunov, 0.9));
        let sa = random_state(&a, &mut rng, 0.0, 1.0);
        let sb = random_state(&b, &mut rng, 0.0, 1.0);
        let ratio = a.cfl_dt(&sa).unwrap() / b.cfl_dt(&sb).unwrap();
        assert!((ratio / 2.0 - 1.0).abs() < 0.5, "ratio {ratio}");

        let half = setup(16, 32, lin, SchemeConfig::first_order(NumericalFluxKind::Godunov, 0.45));
        let r = a.cfl_dt(&sa).unwrap() / half.cfl_dt(&sa).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn refuses_oversized_steps() {
        let fv = setup(8, 16, FluxField::burgers(Vec3::E1), SchemeConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_state(&fv, &mut rng, -1.0, 1.0);
        let dt = fv.cfl_dt(&s).unwrap();
        assert!(matches!(fv.step(&s, 1.5 * dt), Err(SchemeError::CflViolation { .. })));
    }

    #[test]
    fn first_order_mass_and_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kind in [NumericalFluxKind::Godunov, NumericalFluxKind::LaxFriedrichs] {
            let fv = setup(8, 16, FluxField::burgers(Vec3::new(0.2, 0.5, 1.0)), SchemeConfig::first_order(kind, 0.9));
            for _ in 0..10 {
                let s0 = random_state(&fv, &mut rng, 0.5, 1.5);
                let (lo, hi) = s0.min_max();
                let dt = fv.cfl_dt(&s0).unwrap();
                let s1 = fv.step(&s0, dt).unwrap();
                assert!(((s1.mass() - s0.mass()) / s0.mass()).abs() < 1e-13);
                assert!(s1.u.iter().all(|&v| v >= lo - 1e-13 && v <= hi + 1e-13));
            }
        }
    }

    #[test]
    fn muscl_respects_bounds_on_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for kind in [NumericalFluxKind::Godunov, NumericalFluxKind::LaxFriedrichs] {
            let fv =
                setup(16, 32, FluxField::burgers(Vec3::new(0.6, -0.3, 1.0)), SchemeConfig::second_order(kind, 0.5));
            for _ in 0..5 {
                let mut s = random_state(&fv, &mut rng, -1.0, 1.0);
                let (lo, hi) = s.min_max();
                let m0 = s.mass();
                for _ in 0..10 {
                    let dt = fv.cfl_dt(&s).unwrap();
                    s = fv.step(&s, dt).unwrap();
                    assert!(s.u.iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
                }
                assert!((s.mass() - m0).abs() < 1e-12 * m0.abs().max(1.0));
            }
        }
    }

    #[test]
    fn run_hits_output_times() {
        let fv = setup(8, 16, FluxField::linear(Vec3::E3), SchemeConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s0 = random_state(&fv, &mut rng, 0.0, 1.0);
        let traj = fv.run(s0.clone(), 0.0, 4, |_| {});
        assert_eq!(traj.states.len(), 1);
        let traj = fv.run(s0.clone(), 0.7, 4, |_| {});
        assert!(traj.error.is_none());
        let times: Vec<f64> = traj.states.iter().map(|s| s.t).collect();
        assert_eq!(times, vec![0.0, 0.7 * 0.25, 0.7 * 0.5, 0.7 * 0.75, 0.7]);
        let again = fv.run(s0, 0.7, 4, |_| {});
        for (a, b) in traj.states.iter().zip(&again.states) {
            assert_eq!(a.u, b.u);
        }
    }

    #[test]
    fn mismatched_state_is_rejected() {
        let fv = setup(8, 16, FluxField::linear(Vec3::E3), SchemeConfig::default());
        let other = Arc::new(build_web_mesh(4, 8, CoarseningRule::None).unwrap());
        let s = CellState::constant(other, 1.0);
        assert_eq!(fv.step(&s, 0.01).unwrap_err(), SchemeError::MeshMismatch);
        assert!(CellState::new(Arc::clone(fv.mesh()), vec![1.0; 3], 0.0).is_err());
    }
}
