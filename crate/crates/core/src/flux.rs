//! Parametrized flux fields on the sphere.
//!
//! A gradient flux is given by a potential `h(x, u)` on the ambient space and
//! acts on the sphere as `F(x, u) = x ∧ ∇h(x, u)`, which is always tangent. For
//! a curve with unit tangent `tau` and normal `nu = tau ∧ n` one has
//! `F·nu = -dh/ds`, so the total flux through an edge traversed from `start`
//! to `end` is `h(start, u) - h(end, u)`. Summed over any closed cell
//! boundary this telescopes to zero: constants are exact solutions.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::sync::Arc;

use crate::geometry::{tangent_basis, GeometryError, SpherePoint, Vec3};
use crate::mesh::{Edge, EdgeKind, WebMesh};
use crate::quadrature::{adaptive_gk, GaussLegendre};

/// A flux potential `h(x, u)` defined for `x` in the ambient space.
pub trait Potential: Send + Sync {
    fn value(&self, x: Vec3, u: f64) -> f64;
    /// `∂h/∂u`.
    fn du(&self, x: Vec3, u: f64) -> f64;
    /// Ambient gradient `∇_x h`.
    fn grad(&self, x: Vec3, u: f64) -> Vec3;
    /// Calls `f` with every `u` in `(lo, hi)` at which `∂h/∂u` can vanish,
    /// if these points do not depend on `x`. Returns `false` when unknown.
    fn stationary_points(&self, _lo: f64, _hi: f64, _f: &mut dyn FnMut(f64)) -> bool {
        false
    }
}

/// Scalar profile `p(u)` of a built-in flux `f(u) = p(u) c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// `p(u) = u`: solid-body transport.
    Linear,
    /// `p(u) = u^2 / 2`: Burgers type.
    HalfSquare,
    /// `p(u) = sin u`: non-convex.
    Sine,
}

impl Profile {
    #[inline]
    pub fn value(self, u: f64) -> f64 {
        match self {
            Profile::Linear => u,
            Profile::HalfSquare => 0.5 * u * u,
            Profile::Sine => u.sin(),
        }
    }

    #[inline]
    pub fn derivative(self, u: f64) -> f64 {
        match self {
            Profile::Linear => 1.0,
            Profile::HalfSquare => u,
            Profile::Sine => u.cos(),
        }
    }

    /// Zeros of `p'` inside `(lo, hi)`.
    pub fn stationary_points(self, lo: f64, hi: f64, f: &mut dyn FnMut(f64)) {
        match self {
            Profile::Linear => {}
            Profile::HalfSquare => {
                if lo < 0.0 && 0.0 < hi {
                    f(0.0)
                }
            }
            Profile::Sine => {
                // pi/2 + k pi
                let mut k = ((lo - FRAC_PI_2) / PI).floor();
                loop {
                    let w = FRAC_PI_2 + k * PI;
                    if w >= hi {
                        break;
                    }
                    if w > lo {
                        f(w);
                    }
                    k += 1.0;
                }
            }
        }
    }
}

/// Homogeneous flux `f(u) = p(u) c` with a constant vector `c`, i.e. the
/// potential `h(x, u) = p(u) (c · x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisFlux {
    pub profile: Profile,
    pub axis: Vec3,
}

impl Potential for AxisFlux {
    #[inline]
    fn value(&self, x: Vec3, u: f64) -> f64 {
        self.profile.value(u) * self.axis.dot(x)
    }
    #[inline]
    fn du(&self, x: Vec3, u: f64) -> f64 {
        self.profile.derivative(u) * self.axis.dot(x)
    }
    fn grad(&self, _x: Vec3, u: f64) -> Vec3 {
        self.profile.value(u) * self.axis
    }
    fn stationary_points(&self, lo: f64, hi: f64, f: &mut dyn FnMut(f64)) -> bool {
        self.profile.stationary_points(lo, hi, f);
        true
    }
}

/// A real function of one variable with its derivative.
#[derive(Clone)]
pub struct ScalarFn {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    df: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl ScalarFn {
    pub fn new(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { f: Arc::new(f), df: Arc::new(df) }
    }

    pub fn zero() -> Self {
        Self::new(|_| 0.0, |_| 0.0)
    }

    pub fn eval(&self, u: f64) -> f64 {
        (self.f)(u)
    }

    pub fn deriv(&self, u: f64) -> f64 {
        (self.df)(u)
    }
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ScalarFn")
    }
}

/// Homogeneous flux with arbitrary components `f1, f2, f3`;
/// `h(x, u) = f1(u) x1 + f2(u) x2 + f3(u) x3`.
#[derive(Debug, Clone)]
pub struct HomogeneousFlux {
    pub f: [ScalarFn; 3],
}

impl Potential for HomogeneousFlux {
    fn value(&self, x: Vec3, u: f64) -> f64 {
        self.f[0].eval(u) * x.x1 + self.f[1].eval(u) * x.x2 + self.f[2].eval(u) * x.x3
    }
    fn du(&self, x: Vec3, u: f64) -> f64 {
        self.f[0].deriv(u) * x.x1 + self.f[1].deriv(u) * x.x2 + self.f[2].deriv(u) * x.x3
    }
    fn grad(&self, _x: Vec3, u: f64) -> Vec3 {
        Vec3::new(self.f[0].eval(u), self.f[1].eval(u), self.f[2].eval(u))
    }
}

type PotentialFn = Arc<dyn Fn(Vec3, f64) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(Vec3, f64) -> Vec3 + Send + Sync>;

/// General `x`-dependent potential given by closures.
#[derive(Clone)]
pub struct GradientFlux {
    h: PotentialFn,
    dh_du: PotentialFn,
    grad: GradFn,
}

impl GradientFlux {
    pub fn new(
        h: impl Fn(Vec3, f64) -> f64 + Send + Sync + 'static,
        dh_du: impl Fn(Vec3, f64) -> f64 + Send + Sync + 'static,
        grad: impl Fn(Vec3, f64) -> Vec3 + Send + Sync + 'static,
    ) -> Self {
        Self { h: Arc::new(h), dh_du: Arc::new(dh_du), grad: Arc::new(grad) }
    }
}

impl Potential for GradientFlux {
    fn value(&self, x: Vec3, u: f64) -> f64 {
        (self.h)(x, u)
    }
    fn du(&self, x: Vec3, u: f64) -> f64 {
        (self.dh_du)(x, u)
    }
    fn grad(&self, x: Vec3, u: f64) -> Vec3 {
        (self.grad)(x, u)
    }
}

type TangentFn = Arc<dyn Fn(Vec3, f64) -> Vec3 + Send + Sync>;

/// A parametrized flux field on the sphere.
#[derive(Clone)]
pub enum FluxField {
    /// `F(x, u) = x ∧ ∇h(x, u)`; edge fluxes are exact endpoint differences.
    Gradient(Arc<dyn Potential>),
    /// Any tangent field; edge fluxes fall back to Gauss–Legendre quadrature.
    Tangent(TangentFn),
}

impl fmt::Debug for FluxField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FluxField::Gradient(_) => f.write_str("FluxField::Gradient"),
            FluxField::Tangent(_) => f.write_str("FluxField::Tangent"),
        }
    }
}

/// Default Gauss–Legendre order for non-gradient edge fluxes.
pub const DEFAULT_QUADRATURE_ORDER: usize = 8;

impl FluxField {
    pub fn gradient(p: impl Potential + 'static) -> Self {
        FluxField::Gradient(Arc::new(p))
    }

    pub fn tangent(f: impl Fn(Vec3, f64) -> Vec3 + Send + Sync + 'static) -> Self {
        FluxField::Tangent(Arc::new(f))
    }

    /// Solid-body transport `f(u) = u c`.
    pub fn linear(axis: Vec3) -> Self {
        Self::gradient(AxisFlux { profile: Profile::Linear, axis })
    }

    /// Burgers-type `f(u) = (u^2 / 2) c`.
    pub fn burgers(axis: Vec3) -> Self {
        Self::gradient(AxisFlux { profile: Profile::HalfSquare, axis })
    }

    /// `h(x, u) = sin(u) (c · x)`.
    pub fn trig(axis: Vec3) -> Self {
        Self::gradient(AxisFlux { profile: Profile::Sine, axis })
    }

    pub fn potential(&self) -> Option<&Arc<dyn Potential>> {
        match self {
            FluxField::Gradient(p) => Some(p),
            FluxField::Tangent(_) => None,
        }
    }

    /// The flux vector `F(x, u)` in ambient coordinates.
    pub fn vector(&self, x: Vec3, u: f64) -> Vec3 {
        match self {
            FluxField::Gradient(p) => x.cross(p.grad(x, u)),
            FluxField::Tangent(f) => f(x, u),
        }
    }

    /// Components `(F_lambda, F_phi)` in the tangent basis.
    pub fn components(&self, p: SpherePoint, u: f64) -> Result<(f64, f64), GeometryError> {
        let (il, ip) = tangent_basis(p)?;
        let v = self.vector(p.cart().as_vec(), u);
        Ok((v.dot(il), v.dot(ip)))
    }

    /// Total flux `∫_e F·nu ds` at constant `u`.
    pub fn edge_total_flux(&self, e: &Edge, u: f64) -> f64 {
        match self {
            FluxField::Gradient(p) => p.value(e.start.cart().as_vec(), u) - p.value(e.end.cart().as_vec(), u),
            FluxField::Tangent(_) => self.edge_total_flux_quadrature(e, u, DEFAULT_QUADRATURE_ORDER),
        }
    }

    /// Total flux through `e` by Gauss–Legendre quadrature along the arc,
    /// whatever the variant.
    pub fn edge_total_flux_quadrature(&self, e: &Edge, u: f64, order: usize) -> f64 {
        let gl = GaussLegendre::new(order);
        edge_quadrature(e, &gl, |x, nu_ds| self.vector(x, u).dot(nu_ds))
    }

    /// The scalar total-flux function `g_e` of an edge (gradient fluxes only).
    pub fn edge_flux_function(&self, e: &Edge) -> Option<EdgeFlux> {
        self.potential().map(|p| EdgeFlux {
            potential: Arc::clone(p),
            start: e.start.cart().as_vec(),
            end: e.end.cart().as_vec(),
        })
    }
}

/// Integrates `integrand(x, nu ds)` along the edge, where `nu ds` is the
/// normal line element `x'(t) ∧ x(t) dt` of the traversal from start to end.
fn edge_quadrature(e: &Edge, gl: &GaussLegendre, mut integrand: impl FnMut(Vec3, Vec3) -> f64) -> f64 {
    gl.integrate(0.0, 1.0, |t| {
        let (p, dp) = match e.kind {
            EdgeKind::Meridional => {
                let dphi = e.end.phi - e.start.phi;
                let phi = e.start.phi + t * dphi;
                let (sl, cl) = e.start.lambda.sin_cos();
                let (sp, cp) = phi.sin_cos();
                (Vec3::new(cp * cl, cp * sl, sp), dphi * Vec3::new(-sp * cl, -sp * sl, cp))
            }
            EdgeKind::Zonal | EdgeKind::PolarCapRim => {
                let dl = e.end.lambda - e.start.lambda;
                let lambda = e.start.lambda + t * dl;
                let (sl, cl) = lambda.sin_cos();
                let (sp, cp) = e.start.phi.sin_cos();
                (Vec3::new(cp * cl, cp * sl, sp), (dl * cp) * Vec3::new(-sl, cl, 0.0))
            }
        };
        integrand(p, dp.cross(p))
    })
}

/// Free-function form of [`FluxField::components`].
pub fn flux_components(f: &FluxField, p: SpherePoint, u: f64) -> Result<(f64, f64), GeometryError> {
    f.components(p, u)
}

/// Free-function form of [`FluxField::edge_total_flux`].
pub fn edge_total_flux_exact(f: &FluxField, e: &Edge, u: f64) -> f64 {
    f.edge_total_flux(e, u)
}

/// Free-function form of [`FluxField::edge_flux_function`].
pub fn edge_flux_function(f: &FluxField, e: &Edge) -> Option<EdgeFlux> {
    f.edge_flux_function(e)
}

/// A scalar function of `u` with derivative; the interface numerical fluxes
/// are written against.
pub trait EdgeFunction {
    fn value(&self, u: f64) -> f64;
    fn derivative(&self, u: f64) -> f64;
    /// Calls `f` with every zero of the derivative in `(lo, hi)` when these
    /// are known in closed form; returns `false` otherwise.
    fn stationary_points(&self, _lo: f64, _hi: f64, _f: &mut dyn FnMut(f64)) -> bool {
        false
    }
}

impl EdgeFunction for ScalarFn {
    fn value(&self, u: f64) -> f64 {
        self.eval(u)
    }
    fn derivative(&self, u: f64) -> f64 {
        self.deriv(u)
    }
}

impl<T: EdgeFunction + ?Sized> EdgeFunction for &T {
    fn value(&self, u: f64) -> f64 {
        (**self).value(u)
    }
    fn derivative(&self, u: f64) -> f64 {
        (**self).derivative(u)
    }
    fn stationary_points(&self, lo: f64, hi: f64, f: &mut dyn FnMut(f64)) -> bool {
        (**self).stationary_points(lo, hi, f)
    }
}

/// `g_e(u) = h(start, u) - h(end, u)`: the total flux of a gradient field
/// through one edge, from its left cell into its right cell.
#[derive(Clone)]
pub struct EdgeFlux {
    potential: Arc<dyn Potential>,
    start: Vec3,
    end: Vec3,
}

impl fmt::Debug for EdgeFlux {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EdgeFlux").field("start", &self.start).field("end", &self.end).finish()
    }
}

impl EdgeFunction for EdgeFlux {
    #[inline]
    fn value(&self, u: f64) -> f64 {
        self.potential.value(self.start, u) - self.potential.value(self.end, u)
    }
    #[inline]
    fn derivative(&self, u: f64) -> f64 {
        self.potential.du(self.start, u) - self.potential.du(self.end, u)
    }
    fn stationary_points(&self, lo: f64, hi: f64, f: &mut dyn FnMut(f64)) -> bool {
        self.potential.stationary_points(lo, hi, f)
    }
}

const LIPSCHITZ_SAMPLES: usize = 64;
const LIPSCHITZ_SAFETY: f64 = 1.1;

/// Upper bound on `|g'|` over `[lo, hi]`: 1.1 times the largest of 64
/// equally spaced samples.
pub fn lipschitz_bound(g: &impl EdgeFunction, lo: f64, hi: f64) -> f64 {
    assert!(lo <= hi, "lipschitz_bound: empty interval [{lo}, {hi}]");
    let mut m: f64 = 0.0;
    for i in 0..LIPSCHITZ_SAMPLES {
        let t = i as f64 / (LIPSCHITZ_SAMPLES - 1) as f64;
        let u = if i + 1 == LIPSCHITZ_SAMPLES { hi } else { lo + t * (hi - lo) };
        m = m.max(g.derivative(u).abs());
    }
    LIPSCHITZ_SAFETY * m
}

/// Crandall–Majda numerical entropy flux for the Kruzkov entropy `|u - k|`,
/// built from a monotone two-point flux `q(a, b)`.
pub fn kruzkov_edge_flux(q: impl Fn(f64, f64) -> f64, k: f64) -> impl Fn(f64, f64) -> f64 {
    move |a, b| q(a.max(k), b.max(k)) - q(a.min(k), b.min(k))
}

/// Result of [`check_compatibility`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompatibilityReport {
    /// `max |Σ s·g_e(u)| / area(K)` over cells and samples.
    pub max_residual: f64,
    pub worst_cell: usize,
    pub worst_u: f64,
}

/// Discrete geometric compatibility: the signed flux balance of every cell
/// at constant `u`, normalized by the cell area.
pub fn check_compatibility(f: &FluxField, mesh: &WebMesh, u_samples: &[f64]) -> CompatibilityReport {
    compatibility_with(mesh, u_samples, |e, u| f.edge_total_flux(e, u))
}

/// As [`check_compatibility`] but always integrating edge fluxes by
/// quadrature of the given order.
pub fn check_compatibility_quadrature(
    f: &FluxField,
    mesh: &WebMesh,
    u_samples: &[f64],
    order: usize,
) -> CompatibilityReport {
    let gl = GaussLegendre::new(order);
    compatibility_with(mesh, u_samples, |e, u| edge_quadrature(e, &gl, |x, nu_ds| f.vector(x, u).dot(nu_ds)))
}

fn compatibility_with(mesh: &WebMesh, u_samples: &[f64], edge_flux: impl Fn(&Edge, f64) -> f64) -> CompatibilityReport {
    let mut report = CompatibilityReport { max_residual: 0.0, worst_cell: 0, worst_u: f64::NAN };
    for &u in u_samples {
        let fluxes: Vec<f64> = mesh.edges().iter().map(|e| edge_flux(e, u)).collect();
        for (k, cell) in mesh.cells().iter().enumerate() {
            let balance: f64 = mesh.boundary_unchecked(k).iter().map(|b| f64::from(b.sign) * fluxes[b.edge]).sum();
            let r = balance.abs() / cell.area;
            if r > report.max_residual || report.worst_u.is_nan() {
                report = CompatibilityReport { max_residual: r, worst_cell: k, worst_u: u };
            }
        }
    }
    report
}

/// Convex entropy `U` paired with the potential of its entropy flux,
/// `H(x, u) = ∫_{u_ref}^{u} U'(v) ∂_u h(x, v) dv`.
#[derive(Clone)]
pub struct EntropyPair {
    pub entropy: ScalarFn,
    potential: Arc<dyn Potential>,
    u_ref: f64,
}

/// Absolute tolerance of the entropy-flux quadrature.
pub const ENTROPY_QUADRATURE_TOL: f64 = 1e-10;

impl EntropyPair {
    /// Pairs `entropy` with a gradient flux; `None` for non-gradient fields.
    pub fn new(entropy: ScalarFn, flux: &FluxField, u_ref: f64) -> Option<Self> {
        flux.potential().map(|p| Self { entropy, potential: Arc::clone(p), u_ref })
    }

    pub fn flux_potential(&self, x: Vec3, u: f64) -> f64 {
        adaptive_gk(self.u_ref, u, ENTROPY_QUADRATURE_TOL, |v| self.entropy.deriv(v) * self.potential.du(x, v))
    }

    /// Entropy flux through an edge at constant `u`.
    pub fn edge_flux(&self, e: &Edge, u: f64) -> f64 {
        self.flux_potential(e.start.cart().as_vec(), u) - self.flux_potential(e.end.cart().as_vec(), u)
    }
}
