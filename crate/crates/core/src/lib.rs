//! Intrinsic finite volume schemes for scalar conservation laws
//! `∂_t u + div_g f(x, u) = 0` on the unit sphere.
//!
//! The pieces:
//!
//! * [`geometry`]: points, rotations and spherical patch measures.
//! * [`mesh`]: the latitude/longitude web mesh with longitude counts halved
//!   toward the poles, non-conformal at the transition latitudes.
//! * [`flux`]: flux fields built from a potential, `F = x × ∇h(x, u)`, whose
//!   total edge fluxes are endpoint differences of `h`. Constants are exact
//!   discrete solutions for every such field.
//! * [`scheme`]: first order Godunov and Lax–Friedrichs schemes and a
//!   MUSCL–Hancock extension with minmod slopes.
//! * [`diagnostics`]: norms, contraction, Kruzkov entropy residuals and total
//!   variation along the zonal field.
//! * [`torus1d`]: a one dimensional reference problem with a closed form
//!   entropy solution for convex fluxes.
//! * [`config`] and [`driver`]: the experiment plumbing behind the
//!   `sphere-fv` binary.
//!
//! ```
//! use std::sync::Arc;
//! use sphere_fv::{build_web_mesh, CellState, CoarseningRule, FiniteVolume, FluxField, SchemeConfig, Vec3};
//!
//! let mesh = Arc::new(build_web_mesh(8, 16, CoarseningRule::from_threshold(0.5).unwrap()).unwrap());
//! let fv = FiniteVolume::new(Arc::clone(&mesh), FluxField::burgers(Vec3::new(0.0, 0.0, 1.0)), SchemeConfig::default())
//!     .unwrap()
//!     .with_value_range(-1.0, 1.0);
//! let s0 = CellState::constant(mesh, 0.25);
//! let s1 = fv.step(&s0, fv.cfl_dt(&s0).unwrap()).unwrap();
//! assert_eq!(s0.u, s1.u);
//! ```

// Negated float comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diagnostics;
pub mod driver;
pub mod flux;
pub mod fmt;
pub mod geometry;
pub mod mesh;
pub mod quadrature;
pub mod scheme;
pub mod torus1d;

pub use flux::{check_compatibility, CompatibilityReport, FluxField};
pub use geometry::{SpherePoint, UnitVec3, Vec3};
pub use mesh::{build_web_mesh, CoarseningRule, WebMesh};
pub use scheme::{CellState, FiniteVolume, NumericalFluxKind, SchemeConfig, SchemeError};
