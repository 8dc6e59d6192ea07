//! Exact geometry of the unit sphere in geographic coordinates.
//!
//! Longitude `lambda` lives in `[-pi, pi)`, latitude `phi` in `[-pi/2, pi/2]`.
//! All lengths and areas are exact closed forms on the unit sphere.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("tangent basis is singular at the pole (phi = {phi})")]
    PoleSingularity { phi: f64 },
    #[error("invalid range: {0}")]
    InvalidRange(String),
}

/// Cartesian vector in the ambient space.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const E1: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const E2: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const E3: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x1: f64, x2: f64, x3: f64) -> Self {
        Self { x1, x2, x3 }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x1 * o.x1 + self.x2 * o.x2 + self.x3 * o.x3
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x2 * o.x3 - self.x3 * o.x2, self.x3 * o.x1 - self.x1 * o.x3, self.x1 * o.x2 - self.x2 * o.x1)
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x1, self.x2, self.x3]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x1 + o.x1, self.x2 + o.x2, self.x3 + o.x3)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x1 - o.x1, self.x2 - o.x2, self.x3 - o.x3)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x1, -self.x2, -self.x3)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        Vec3::new(self * v.x1, self * v.x2, self * v.x3)
    }
}

/// A vector of unit length; used for points of the sphere and rotation axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVec3(Vec3);

impl UnitVec3 {
    /// Normalizes `v`. Returns `None` for the zero vector or non-finite input.
    pub fn new_normalize(v: Vec3) -> Option<Self> {
        let n = v.norm();
        if n.is_finite() && n > 0.0 {
            Some(Self((1.0 / n) * v))
        } else {
            None
        }
    }

    /// Wraps `v` without normalizing. The caller guarantees `|v| = 1`.
    pub fn new_unchecked(v: Vec3) -> Self {
        Self(v)
    }

    pub fn as_vec(self) -> Vec3 {
        self.0
    }

    /// Recovers geographic coordinates.
    pub fn to_sph(self) -> SpherePoint {
        let v = self.0;
        let phi = v.x3.clamp(-1.0, 1.0).asin();
        let lambda = v.x2.atan2(v.x1);
        SpherePoint::new(lambda, phi)
    }
}

impl std::ops::Deref for UnitVec3 {
    type Target = Vec3;
    fn deref(&self) -> &Vec3 {
        &self.0
    }
}

/// Wraps a longitude into `[-pi, pi)`.
pub fn normalize_lambda(lambda: f64) -> f64 {
    let mut l = (lambda + PI).rem_euclid(TAU) - PI;
    // rem_euclid can round up to exactly TAU
    if l >= PI {
        l -= TAU;
    }
    l
}

/// Signed longitude difference `b - a` wrapped into `[-pi, pi)`.
pub fn lambda_diff(a: f64, b: f64) -> f64 {
    normalize_lambda(b - a)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpherePoint {
    pub lambda: f64,
    pub phi: f64,
}

impl SpherePoint {
    /// Builds a point with normalized longitude. Latitude is clamped to the
    /// closed interval `[-pi/2, pi/2]`.
    pub fn new(lambda: f64, phi: f64) -> Self {
        Self { lambda: normalize_lambda(lambda), phi: phi.clamp(-FRAC_PI_2, FRAC_PI_2) }
    }

    /// Builds a point keeping `lambda` as given (e.g. `pi` as the eastern
    /// end of a cell). Geometry only depends on `lambda` modulo `2 pi`.
    pub fn raw(lambda: f64, phi: f64) -> Self {
        Self { lambda, phi }
    }

    pub fn is_pole(&self) -> bool {
        self.phi.abs() >= FRAC_PI_2
    }

    pub fn cart(&self) -> UnitVec3 {
        sph_to_cart(*self)
    }
}

/// `(cos phi cos lambda, cos phi sin lambda, sin phi)`.
pub fn sph_to_cart(p: SpherePoint) -> UnitVec3 {
    let (sl, cl) = p.lambda.sin_cos();
    let (sp, cp) = p.phi.sin_cos();
    UnitVec3(Vec3::new(cp * cl, cp * sl, sp))
}

/// Eastward and northward unit tangent vectors `(i_lambda, i_phi)`.
///
/// `(i_lambda, i_phi, n)` is a right-handed orthonormal frame.
pub fn tangent_basis(p: SpherePoint) -> Result<(Vec3, Vec3), GeometryError> {
    if p.is_pole() {
        return Err(GeometryError::PoleSingularity { phi: p.phi });
    }
    let (sl, cl) = p.lambda.sin_cos();
    let (sp, cp) = p.phi.sin_cos();
    let i_lambda = Vec3::new(-sl, cl, 0.0);
    let i_phi = Vec3::new(-sp * cl, -sp * sl, cp);
    Ok((i_lambda, i_phi))
}

/// Exact area of the patch `[l1, l2] x [p1, p2]`.
pub fn zonal_patch_area(l1: f64, l2: f64, p1: f64, p2: f64) -> Result<f64, GeometryError> {
    if !(l1 < l2 && l2 <= l1 + TAU) {
        return Err(GeometryError::InvalidRange(format!(
            "longitude range [{l1}, {l2}] must satisfy l1 < l2 <= l1 + 2pi"
        )));
    }
    if !(-FRAC_PI_2 <= p1 && p1 < p2 && p2 <= FRAC_PI_2) {
        return Err(GeometryError::InvalidRange(format!(
            "latitude range [{p1}, {p2}] must satisfy -pi/2 <= p1 < p2 <= pi/2"
        )));
    }
    Ok((l2 - l1) * (p2.sin() - p1.sin()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcKind {
    /// Along a circle of constant latitude; the fixed coordinate is `phi`.
    Latitude,
    /// Along a meridian; the fixed coordinate is `lambda`.
    Meridian,
}

/// Exact length of a coordinate arc from `a` to `b`.
pub fn arc_length(kind: ArcKind, fixed: f64, a: f64, b: f64) -> Result<f64, GeometryError> {
    if !(a < b) {
        return Err(GeometryError::InvalidRange(format!("arc requires a < b, got [{a}, {b}]")));
    }
    Ok(match kind {
        ArcKind::Latitude => (b - a) * fixed.cos(),
        ArcKind::Meridian => b - a,
    })
}

/// Great-circle distance between two unit vectors.
pub fn great_circle_distance(a: Vec3, b: Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Rotates `v` about the unit `axis` by `angle` (right-hand rule).
pub fn rotate(v: Vec3, axis: UnitVec3, angle: f64) -> Vec3 {
    let k = axis.as_vec();
    let (s, c) = angle.sin_cos();
    c * v + s * k.cross(v) + ((1.0 - c) * k.dot(v)) * k
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn cart_axes() {
        assert!(close(sph_to_cart(SpherePoint::new(0.0, 0.0)).as_vec(), Vec3::E1, 1e-15));
        assert!(close(sph_to_cart(SpherePoint::new(FRAC_PI_2, 0.0)).as_vec(), Vec3::E2, 1e-15));
        assert!(close(sph_to_cart(SpherePoint::new(0.0, FRAC_PI_2)).as_vec(), Vec3::E3, 1e-15));
    }

    #[test]
    fn basis_examples() {
        let (il, ip) = tangent_basis(SpherePoint::new(0.0, 0.0)).unwrap();
        assert!(close(il, Vec3::E2, 1e-15));
        assert!(close(ip, Vec3::E3, 1e-15));
        let (il, ip) = tangent_basis(SpherePoint::new(FRAC_PI_2, 0.0)).unwrap();
        assert!(close(il, -Vec3::E1, 1e-15));
        assert!(close(ip, Vec3::E3, 1e-15));
        assert!(matches!(tangent_basis(SpherePoint::new(0.3, FRAC_PI_2)), Err(GeometryError::PoleSingularity { .. })));
        assert!(tangent_basis(SpherePoint::new(0.3, -FRAC_PI_2)).is_err());
    }

    #[test]
    fn frame_is_right_handed() {
        let p = SpherePoint::new(0.7, -0.4);
        let (il, ip) = tangent_basis(p).unwrap();
        assert!(close(il.cross(ip), p.cart().as_vec(), 1e-15));
    }

    #[test]
    fn patch_areas() {
        let a = zonal_patch_area(0.0, TAU, -FRAC_PI_2, FRAC_PI_2).unwrap();
        assert!((a - 4.0 * PI).abs() < 1e-14);
        let a = zonal_patch_area(0.0, FRAC_PI_2, 0.0, PI / 6.0).unwrap();
        assert!((a - PI / 4.0).abs() < 1e-15);
        let a = zonal_patch_area(0.0, PI, 0.0, FRAC_PI_2).unwrap();
        assert!((a - PI).abs() < 1e-15);
        assert!(zonal_patch_area(1.0, 0.5, 0.0, 0.1).is_err());
        assert!(zonal_patch_area(0.0, 7.0, 0.0, 0.1).is_err());
        assert!(zonal_patch_area(0.0, 1.0, 0.2, 0.1).is_err());
        assert!(zonal_patch_area(0.0, 1.0, -2.0, 0.1).is_err());
    }

    #[test]
    fn arcs() {
        let l = arc_length(ArcKind::Latitude, PI / 3.0, 0.0, PI).unwrap();
        assert!((l - FRAC_PI_2).abs() < 1e-15);
        let l = arc_length(ArcKind::Latitude, 0.0, 0.0, TAU).unwrap();
        assert!((l - TAU).abs() < 1e-15);
        let l = arc_length(ArcKind::Meridian, 1.2, 0.0, PI / 4.0).unwrap();
        assert!((l - PI / 4.0).abs() < 1e-15);
        assert!(arc_length(ArcKind::Meridian, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn lambda_normalization() {
        assert_eq!(normalize_lambda(PI), -PI);
        assert_eq!(normalize_lambda(-PI), -PI);
        assert!((normalize_lambda(3.0 * PI + 0.5) - (-PI + 0.5)).abs() < 1e-14);
        assert!((lambda_diff(3.0, -3.0) - (TAU - 6.0)).abs() < 1e-14);
    }

    #[test]
    fn rotation_quarter_turn() {
        let z = UnitVec3::new_normalize(Vec3::E3).unwrap();
        assert!(close(rotate(Vec3::E1, z, FRAC_PI_2), Vec3::E2, 1e-15));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn basis_orthonormal_and_tangent(l in -PI..PI, p in -(FRAC_PI_2 - 1e-4)..(FRAC_PI_2 - 1e-4)) {
            let pt = SpherePoint::new(l, p);
            let n = pt.cart();
            prop_assert!((n.norm() - 1.0).abs() < 1e-14);
            let (il, ip) = tangent_basis(pt).unwrap();
            prop_assert!((il.norm() - 1.0).abs() < 1e-14);
            prop_assert!((ip.norm() - 1.0).abs() < 1e-14);
            prop_assert!(il.dot(ip).abs() < 1e-14);
            prop_assert!(il.dot(n.as_vec()).abs() < 1e-14);
            prop_assert!(ip.dot(n.as_vec()).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn round_trip(l in -PI..PI, p in -1.57..1.57f64) {
            let q = SpherePoint::new(l, p).cart().to_sph();
            prop_assert!(lambda_diff(l, q.lambda).abs() < 1e-12);
            prop_assert!((q.phi - p).abs() < 1e-12);
        }

        #[test]
        fn area_additivity(
            l1 in -PI..0.0f64, w in 0.01..6.0f64, p1 in -1.5..0.0f64, h in 0.01..1.5f64,
            sl in 0.01..0.99f64, sp in 0.01..0.99f64,
        ) {
            let (l2, p2) = (l1 + w, p1 + h);
            let whole = zonal_patch_area(l1, l2, p1, p2).unwrap();
            let lm = l1 + sl * w;
            let pm = p1 + sp * h;
            let a = zonal_patch_area(l1, lm, p1, p2).unwrap() + zonal_patch_area(lm, l2, p1, p2).unwrap();
            let b = zonal_patch_area(l1, l2, p1, pm).unwrap() + zonal_patch_area(l1, l2, pm, p2).unwrap();
            prop_assert!((a - whole).abs() < 1e-13);
            prop_assert!((b - whole).abs() < 1e-13);
        }
    }
}
