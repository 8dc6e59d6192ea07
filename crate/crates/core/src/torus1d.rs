//! Exact entropy solutions on the circle `T¹ = [0, 2π)` with a weighted
//! volume form, and a 1-D Godunov scheme to compare against.
//!
//! With volume form `ω̄(x) dx` the conservation law reads
//! `∂_t (ω̄ u) + ∂_x f(u) = 0`. In the measure coordinate `ξ(x) = ∫_0^x ω̄`
//! this is the plain law `∂_t u + ∂_ξ f(u) = 0`, so for strictly convex `f`
//! the solution is given by the Lax formula
//!
//! ```text
//! u(t, x) = (f')^{-1}((ξ(x) - ξ(y*)) / t),
//! y* = argmin_y  U0(y) + t f*((ξ(x) - ξ(y)) / t),   U0(y) = ∫_0^y u0 ω̄
//! ```
//!
//! where `f*` is the Legendre transform of `f`. For `ω̄ ≡ 1` this is the
//! classical Lax–Oleinik formula.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::fmt::fmt_f64;
use crate::quadrature::GaussLegendre;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TorusError {
    #[error("convexity violation: flux is not strictly convex near u = {u}")]
    ConvexityViolation { u: f64 },
    #[error("invalid volume form: {0}")]
    WeightBounds(String),
    #[error("time step {dt} exceeds the CFL limit {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("{0}")]
    InvalidInput(String),
}

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A strictly convex flux with its derivative and the inverse of the
/// derivative.
#[derive(Clone)]
pub struct ConvexFlux {
    pub name: String,
    f: RealFn,
    df: RealFn,
    df_inv: RealFn,
}

impl std::fmt::Debug for ConvexFlux {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ConvexFlux({})", self.name)
    }
}

impl ConvexFlux {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df_inv: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), f: Arc::new(f), df: Arc::new(df), df_inv: Arc::new(df_inv) }
    }

    /// `u² / 2`.
    pub fn burgers() -> Self {
        Self::new("burgers", |u| 0.5 * u * u, |u| u, |p| p)
    }

    /// `e^u`.
    pub fn exponential() -> Self {
        Self::new("exp", f64::exp, f64::exp, f64::ln)
    }

    /// `u³ / 3`, convex only for `u >= 0`.
    pub fn cubic() -> Self {
        Self::new("cubic", |u| u * u * u / 3.0, |u| u * u, f64::sqrt)
    }

    pub fn value(&self, u: f64) -> f64 {
        (self.f)(u)
    }

    pub fn derivative(&self, u: f64) -> f64 {
        (self.df)(u)
    }

    pub fn derivative_inverse(&self, p: f64) -> f64 {
        (self.df_inv)(p)
    }

    /// Legendre transform `f*(p) = p v - f(v)` with `f'(v) = p`.
    pub fn conjugate(&self, p: f64) -> f64 {
        let v = (self.df_inv)(p);
        p * v - (self.f)(v)
    }

    /// Exact Godunov flux for convex `f`.
    pub fn godunov(&self, a: f64, b: f64) -> f64 {
        if a == b {
            return (self.f)(a);
        }
        if a < b {
            // min over [a, b] sits at the sonic point if it lies inside.
            if (self.df)(a) >= 0.0 {
                (self.f)(a)
            } else if (self.df)(b) <= 0.0 {
                (self.f)(b)
            } else {
                (self.f)((self.df_inv)(0.0))
            }
        } else {
            (self.f)(a).max((self.f)(b))
        }
    }
}

/// Positive density `ω̄` of the volume form.
#[derive(Clone)]
pub struct Weight {
    pub name: String,
    w: RealFn,
    unit: bool,
}

impl std::fmt::Debug for Weight {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Weight({})", self.name)
    }
}

impl Weight {
    pub fn unit() -> Self {
        Self { name: "one".into(), w: Arc::new(|_| 1.0), unit: true }
    }

    /// `1 + amplitude sin x`.
    pub fn sine(amplitude: f64) -> Self {
        Self { name: format!("1+{amplitude}sin"), w: Arc::new(move |x: f64| 1.0 + amplitude * x.sin()), unit: false }
    }

    pub fn new(name: impl Into<String>, w: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), w: Arc::new(w), unit: false }
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.w)(x)
    }
}

/// Periodic initial data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TorusInit {
    Constant(f64),
    /// `mean + amplitude sin x`.
    Sine {
        mean: f64,
        amplitude: f64,
    },
    /// `high` on `(0, π)`, `low` elsewhere.
    Step {
        high: f64,
        low: f64,
    },
}

impl TorusInit {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TorusInit::Constant(c) => c,
            TorusInit::Sine { mean, amplitude } => mean + amplitude * x.sin(),
            TorusInit::Step { high, low } => {
                let r = x.rem_euclid(TAU);
                if r > 0.0 && r < std::f64::consts::PI {
                    high
                } else {
                    low
                }
            }
        }
    }

    pub fn range(&self) -> (f64, f64) {
        match *self {
            TorusInit::Constant(c) => (c, c),
            TorusInit::Sine { mean, amplitude } => (mean - amplitude.abs(), mean + amplitude.abs()),
            TorusInit::Step { high, low } => (high.min(low), high.max(low)),
        }
    }
}

const CONVEXITY_SAMPLES: usize = 256;
const TABLE_INTERVALS: usize = 4096;
const LAX_CANDIDATES: usize = 4096;
const LAX_TOL: f64 = 1e-13;

/// Cumulative integrals of `ω̄` and `u0 ω̄` at table nodes `i 2π / M`.
#[derive(Debug, Clone)]
struct Primitives {
    xi: Vec<f64>,
    mass: Vec<f64>,
}

#[derive(Clone)]
pub struct TorusProblem {
    pub flux: ConvexFlux,
    pub weight: Weight,
    pub init: TorusInit,
    /// `(min ω̄, max ω̄)` on the sampling grid.
    pub weight_bounds: (f64, f64),
    range: (f64, f64),
    prim: Arc<Primitives>,
    gl: Arc<GaussLegendre>,
}

impl std::fmt::Debug for TorusProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TorusProblem")
            .field("flux", &self.flux)
            .field("weight", &self.weight)
            .field("init", &self.init)
            .finish()
    }
}

impl TorusProblem {
    /// Validates strict convexity of `f` on the data range (f' strictly
    /// increasing over 256 samples) and `0 < c <= ω̄ <= C` on a 256-point grid.
    pub fn new(flux: ConvexFlux, weight: Weight, init: TorusInit) -> Result<Self, TorusError> {
        let range = init.range();
        if !(range.0.is_finite() && range.1.is_finite()) {
            return Err(TorusError::InvalidInput("initial data must be finite".into()));
        }
        let pad = if range.1 > range.0 { 0.1 * (range.1 - range.0) } else { 0.5 };
        let (a, b) = (range.0 - pad, range.1 + pad);
        let n = CONVEXITY_SAMPLES;
        let mut prev = flux.derivative(a);
        for i in 1..n {
            let u = a + (b - a) * i as f64 / (n - 1) as f64;
            let d = flux.derivative(u);
            if !(d > prev) {
                return Err(TorusError::ConvexityViolation { u });
            }
            prev = d;
        }

        let mut bounds = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..CONVEXITY_SAMPLES {
            let w = weight.eval(TAU * i as f64 / CONVEXITY_SAMPLES as f64);
            if !(w.is_finite() && w > 0.0) {
                return Err(TorusError::WeightBounds(format!("weight {w} at sample {i} is not positive")));
            }
            bounds = (bounds.0.min(w), bounds.1.max(w));
        }

        let gl = Arc::new(GaussLegendre::new(8));
        let h = TAU / TABLE_INTERVALS as f64;
        let mut xi = vec![0.0; TABLE_INTERVALS + 1];
        let mut mass = vec![0.0; TABLE_INTERVALS + 1];
        for i in 0..TABLE_INTERVALS {
            let (x0, x1) = (i as f64 * h, (i + 1) as f64 * h);
            let (dw, dm) = gl.on_interval(x0, x1).fold((0.0, 0.0), |(sw, sm), (x, wq)| {
                let w = weight.eval(x);
                (sw + wq * w, sm + wq * w * init.eval(x))
            });
            xi[i + 1] = xi[i] + dw;
            mass[i + 1] = mass[i] + dm;
        }
        Ok(Self { flux, weight, init, weight_bounds: bounds, range, prim: Arc::new(Primitives { xi, mass }), gl })
    }

    pub fn burgers_sine() -> Self {
        Self::new(ConvexFlux::burgers(), Weight::unit(), TorusInit::Sine { mean: 0.0, amplitude: 1.0 })
            .expect("burgers is convex")
    }

    /// Range of the initial data; entropy solutions stay inside it.
    pub fn data_range(&self) -> (f64, f64) {
        self.range
    }

    /// Total `ω̄` measure of the circle.
    pub fn total_measure(&self) -> f64 {
        self.prim.xi[TABLE_INTERVALS]
    }

    /// `(ξ(y), U0(y))` for any real `y`, extended periodically.
    fn primitives(&self, y: f64) -> (f64, f64) {
        let k = (y / TAU).floor();
        let r = y - k * TAU;
        let (l, m) = (self.prim.xi[TABLE_INTERVALS], self.prim.mass[TABLE_INTERVALS]);
        let h = TAU / TABLE_INTERVALS as f64;
        let i = ((r / h) as usize).min(TABLE_INTERVALS - 1);
        let x0 = i as f64 * h;
        let (pw, pm) = if r == x0 {
            (0.0, 0.0)
        } else {
            self.gl.on_interval(x0, r).fold((0.0, 0.0), |(sw, sm), (x, wq)| {
                let w = self.weight.eval(x);
                (sw + wq * w, sm + wq * w * self.init.eval(x))
            })
        };
        let xi = if self.weight.unit { y } else { k * l + self.prim.xi[i] + pw };
        (xi, k * m + self.prim.mass[i] + pm)
    }

    fn xi(&self, y: f64) -> f64 {
        if self.weight.unit {
            y
        } else {
            self.primitives(y).0
        }
    }

    /// Inverse of the measure coordinate.
    fn xi_inverse(&self, eta: f64) -> f64 {
        if self.weight.unit {
            return eta;
        }
        let l = self.total_measure();
        let k = (eta / l).floor();
        let rem = eta - k * l;
        let xi = &self.prim.xi;
        let i = match xi.binary_search_by(|v| v.total_cmp(&rem)) {
            Ok(i) => i.min(TABLE_INTERVALS - 1),
            Err(i) => i.saturating_sub(1).min(TABLE_INTERVALS - 1),
        };
        let h = TAU / TABLE_INTERVALS as f64;
        let (mut lo, mut hi) = (i as f64 * h, (i + 1) as f64 * h);
        let target = k * l + rem;
        let base = k * TAU;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= LAX_TOL || mid == lo || mid == hi {
                break;
            }
            if self.xi(base + mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        base + 0.5 * (lo + hi)
    }

    /// Entropy solution at `(t, x)` from the Lax formula.
    ///
    /// The minimizer is located on 4096 candidates spanning the domain of
    /// dependence, then polished by bisection on the sign of
    /// `u0(y) - (f')^{-1}((ξ(x) - ξ(y)) / t)` (golden section if the sign
    /// does not change). Ties go to the smaller `y`.
    pub fn lax_solution(&self, t: f64, x: f64) -> f64 {
        let (lo, hi) = self.range;
        if t <= 0.0 {
            return self.init.eval(x);
        }
        if lo == hi {
            return lo;
        }
        let f = &self.flux;
        let xi_x = self.xi(x);
        let (pmin, pmax) = (f.derivative(lo), f.derivative(hi));
        let ya = self.xi_inverse(xi_x - t * pmax);
        let yb = self.xi_inverse(xi_x - t * pmin);
        let p_of = |xi_y: f64| ((xi_x - xi_y) / t).clamp(pmin, pmax);
        let g = |y: f64| {
            let (xi_y, u0) = self.primitives(y);
            u0 + t * f.conjugate(p_of(xi_y))
        };

        let n = LAX_CANDIDATES - 1;
        let node = |j: usize| if j == n { yb } else { ya + (yb - ya) * j as f64 / n as f64 };
        let mut best = (0, g(ya));
        for j in 1..=n {
            let v = g(node(j));
            if v < best.1 {
                best = (j, v);
            }
        }
        let (j, _) = best;
        let (l, r) = (node(j.saturating_sub(1)), node((j + 1).min(n)));
        let s = |y: f64| self.init.eval(y) - f.derivative_inverse(p_of(self.xi(y)));
        let y_star = if s(l) < 0.0 && s(r) > 0.0 {
            let (mut a, mut b) = (l, r);
            while b - a > LAX_TOL {
                let m = 0.5 * (a + b);
                if m == a || m == b {
                    break;
                }
                if s(m) > 0.0 {
                    b = m;
                } else {
                    a = m;
                }
            }
            // G' < 0 left of a, > 0 right of b: the minimum is in [a, b].
            0.5 * (a + b)
        } else if j == 0 || j == n {
            node(j)
        } else {
            golden_min(&g, l, r, 1e-10)
        };
        f.derivative_inverse(p_of(self.xi(y_star)))
    }

    /// Cell grid of `n` equal cells in `x` with their `ω̄` measures.
    pub fn grid(&self, n: usize) -> TorusGrid {
        let dx = TAU / n as f64;
        let edges: Vec<f64> = (0..=n).map(|j| if j == n { TAU } else { j as f64 * dx }).collect();
        let measures = edges.windows(2).map(|w| self.xi(w[1]) - self.xi(w[0])).collect();
        TorusGrid { n, dx, edges, measures: Arc::new(measures) }
    }

    /// Exact `ω̄`-weighted cell averages of the initial data.
    pub fn initial_state(&self, grid: &TorusGrid) -> TorusState {
        let u = (0..grid.n)
            .map(|j| {
                if let TorusInit::Constant(c) = self.init {
                    return c;
                }
                (self.primitives(grid.edges[j + 1]).1 - self.primitives(grid.edges[j]).1) / grid.measures[j]
            })
            .collect();
        TorusState { u, t: 0.0, measures: Arc::clone(&grid.measures) }
    }

    /// `ω̄`-weighted cell averages of the Lax solution (Gauss–Legendre, 4
    /// nodes per cell).
    pub fn exact_cell_averages(&self, grid: &TorusGrid, t: f64) -> Vec<f64> {
        use rayon::prelude::*;
        let gl = GaussLegendre::new(4);
        (0..grid.n)
            .into_par_iter()
            .map(|j| {
                // Deviations from the first node keep constants exact.
                let (mut s, mut m, mut v0) = (0.0, 0.0, None);
                for (x, wq) in gl.on_interval(grid.edges[j], grid.edges[j + 1]) {
                    let w = wq * self.weight.eval(x);
                    let v = self.lax_solution(t, x);
                    let base = *v0.get_or_insert(v);
                    s += w * (v - base);
                    m += w;
                }
                v0.unwrap_or(0.0) + s / m
            })
            .collect()
    }

    /// Largest stable step `cfl · min m_j / max |f'|` on the data range.
    pub fn max_dt(&self, grid: &TorusGrid, cfl: f64) -> f64 {
        let speed = self.max_speed();
        let m = grid.measures.iter().copied().fold(f64::INFINITY, f64::min);
        if speed == 0.0 {
            f64::INFINITY
        } else {
            cfl * m / speed
        }
    }

    fn max_speed(&self) -> f64 {
        let (lo, hi) = self.range;
        self.flux.derivative(lo).abs().max(self.flux.derivative(hi).abs())
    }
}

fn golden_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    const R: f64 = 0.618_033_988_749_894_9;
    let mut c = b - R * (b - a);
    let mut d = a + R * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
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
    0.5 * (a + b)
}

#[derive(Debug, Clone)]
pub struct TorusGrid {
    pub n: usize,
    pub dx: f64,
    /// Cell boundaries, `n + 1` of them.
    pub edges: Vec<f64>,
    /// `∫ ω̄` over each cell.
    pub measures: Arc<Vec<f64>>,
}

impl TorusGrid {
    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TorusState {
    pub u: Vec<f64>,
    pub t: f64,
    pub measures: Arc<Vec<f64>>,
}

impl TorusState {
    /// `Σ m_j u_j`.
    pub fn mass(&self) -> f64 {
        self.measures.iter().zip(&self.u).map(|(m, u)| m * u).sum()
    }

    /// `Σ m_j |u_j - v_j|`.
    pub fn l1_distance(&self, other: &[f64]) -> f64 {
        self.measures.iter().zip(self.u.iter().zip(other)).map(|(m, (a, b))| m * (a - b).abs()).sum()
    }
}

/// One Godunov step `m_j u_j^{n+1} = m_j u_j^n - dt (q_{j+1/2} - q_{j-1/2})`.
pub fn fv1d_step(state: &TorusState, prob: &TorusProblem, dt: f64) -> Result<TorusState, TorusError> {
    let mmin = state.measures.iter().copied().fold(f64::INFINITY, f64::min);
    let speed = prob.max_speed();
    if !(dt >= 0.0) || dt * speed > mmin * (1.0 + 1e-12) {
        return Err(TorusError::CflViolation { dt, limit: if speed > 0.0 { mmin / speed } else { f64::INFINITY } });
    }
    let u = &state.u;
    let n = u.len();
    // q[j] is the flux through the left boundary of cell j.
    let q: Vec<f64> = (0..n).map(|j| prob.flux.godunov(u[(j + n - 1) % n], u[j])).collect();
    let next = (0..n).map(|j| u[j] - dt / state.measures[j] * (q[(j + 1) % n] - q[j])).collect();
    Ok(TorusState { u: next, t: state.t + dt, measures: Arc::clone(&state.measures) })
}

/// Runs the scheme on `grid` up to `t_end`, landing exactly on `t_end`.
pub fn fv1d_solve(prob: &TorusProblem, grid: &TorusGrid, t_end: f64, cfl: f64) -> Result<TorusState, TorusError> {
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(TorusError::InvalidInput(format!("cfl must lie in (0, 1], got {cfl}")));
    }
    let mut s = prob.initial_state(grid);
    let dt_max = prob.max_dt(grid, cfl);
    while s.t < t_end {
        let dt = dt_max.min(t_end - s.t);
        let landing = dt == t_end - s.t;
        s = fv1d_step(&s, prob, dt)?;
        if landing {
            s.t = t_end;
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRow {
    pub n: usize,
    pub l1_error: f64,
    /// `log2(e_prev / e) / log2(n / n_prev)`; `None` on the first row.
    pub observed_order: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TorusProfile {
    pub n: usize,
    pub x: Vec<f64>,
    pub u_exact: Vec<f64>,
    pub u_fv: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
    pub profiles: Vec<TorusProfile>,
}

impl ErrorTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,l1_error,observed_order\n");
        for r in &self.rows {
            let order = r.observed_order.map_or(String::new(), fmt_f64);
            let _ = writeln!(out, "{},{},{}", r.n, fmt_f64(r.l1_error), order);
        }
        out
    }

    pub fn profile_csv(p: &TorusProfile) -> String {
        let mut out = String::from("x,u_exact,u_fv\n");
        for ((x, e), f) in p.x.iter().zip(&p.u_exact).zip(&p.u_fv) {
            let _ = writeln!(out, "{},{},{}", fmt_f64(*x), fmt_f64(*e), fmt_f64(*f));
        }
        out
    }
}

pub fn observed_order(e_coarse: f64, e_fine: f64, refinement: f64) -> f64 {
    (e_coarse / e_fine).ln() / refinement.ln()
}

/// `L¹_ω` errors of the scheme against the Lax formula at `t_end`.
pub fn compare(prob: &TorusProblem, resolutions: &[usize], t_end: f64, cfl: f64) -> Result<ErrorTable, TorusError> {
    let mut table = ErrorTable::default();
    for &n in resolutions {
        if n < 2 {
            return Err(TorusError::InvalidInput(format!("resolution {n} is too small")));
        }
        let grid = prob.grid(n);
        let s = fv1d_solve(prob, &grid, t_end, cfl)?;
        let exact = prob.exact_cell_averages(&grid, t_end);
        let err = s.l1_distance(&exact);
        let observed_order =
            table.rows.last().map(|p: &ErrorRow| observed_order(p.l1_error, err, n as f64 / p.n as f64));
        table.rows.push(ErrorRow { n, l1_error: err, observed_order });
        table.profiles.push(TorusProfile { n, x: grid.centers().collect(), u_exact: exact, u_fv: s.u });
    }
    Ok(table)
}
