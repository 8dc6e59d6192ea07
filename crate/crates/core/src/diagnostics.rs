//! Discrete counterparts of the stability and entropy properties of the
//! continuous problem, evaluated on cell states.

use std::fmt::Write as _;

use crate::flux::kruzkov_edge_flux;
use crate::fmt::fmt_f64;
use crate::mesh::EdgeKind;
use crate::scheme::{CellState, FiniteVolume, SchemeError};

/// `(Σ area |u|^q)^{1/q}`, or `max |u|` for infinite `q`.
pub fn lq_norm(state: &CellState, q: f64) -> f64 {
    assert!(q >= 1.0, "lq_norm needs q >= 1, got {q}");
    if q.is_infinite() {
        return state.u.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    let cells = state.mesh().cells();
    let s: f64 = cells.iter().zip(&state.u).map(|(c, u)| c.area * u.abs().powf(q)).sum();
    if q == 1.0 {
        s
    } else {
        s.powf(1.0 / q)
    }
}

/// `Σ area |a - b|`.
pub fn l1_distance(a: &CellState, b: &CellState) -> Result<f64, SchemeError> {
    if !a.same_mesh(b) {
        return Err(SchemeError::MeshMismatch);
    }
    let cells = a.mesh().cells();
    Ok(cells.iter().zip(a.u.iter().zip(&b.u)).map(|(c, (x, y))| c.area * (x - y).abs()).sum())
}

pub fn mass(state: &CellState) -> f64 {
    state.mass()
}

/// Per-cell Kruzkov entropy residual of a first-order step `prev -> next`:
///
/// ```text
/// R_K = area (|u_K^{n+1} - k| - |u_K^n - k|) / dt + Σ s Q_e(u_left^n, u_right^n)
/// ```
///
/// with `Q_e(a, b) = q_e(a ∨ k, b ∨ k) - q_e(a ∧ k, b ∧ k)`. A monotone scheme
/// gives `R_K <= 0` up to roundoff.
pub fn entropy_residual(
    fv: &FiniteVolume,
    prev: &CellState,
    next: &CellState,
    dt: f64,
    k: f64,
) -> Result<Vec<f64>, SchemeError> {
    fv.check_state(prev)?;
    if !prev.same_mesh(next) {
        return Err(SchemeError::MeshMismatch);
    }
    let mesh = fv.mesh();
    let q = fv.flux_evaluator(prev);
    let u = &prev.u;
    let qk: Vec<f64> = mesh
        .edges()
        .iter()
        .enumerate()
        .map(|(i, e)| kruzkov_edge_flux(|a, b| q(i, a, b), k)(u[e.left], u[e.right]))
        .collect();
    Ok(mesh
        .cells()
        .iter()
        .enumerate()
        .map(|(c, cell)| {
            // Q_e(u_K, u_K) vanishes for every cell side, so the incremental
            // form needs no correction term here.
            let div: f64 = mesh.boundary_unchecked(c).iter().map(|b| f64::from(b.sign) * qk[b.edge]).sum();
            cell.area * ((next.u[c] - k).abs() - (u[c] - k).abs()) / dt + div
        })
        .collect())
}

/// Uniform grid of `n` Kruzkov constants over the data range widened by 10%
/// on each side.
pub fn kruzkov_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let pad = 0.1 * (hi - lo);
    let (a, b) = (lo - pad, hi + pad);
    if n == 1 {
        return vec![0.5 * (a + b)];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Largest entropy residual over cells and the given Kruzkov constants.
pub fn max_entropy_residual(
    fv: &FiniteVolume,
    prev: &CellState,
    next: &CellState,
    dt: f64,
    ks: &[f64],
) -> Result<f64, SchemeError> {
    let mut m = f64::NEG_INFINITY;
    for &k in ks {
        for r in entropy_residual(fv, prev, next, dt, k)? {
            m = m.max(r);
        }
    }
    Ok(m)
}

/// Total variation along the zonal field `∂_λ`: jumps across meridional
/// edges weighted by `length · cos φ` at the edge midpoint.
pub fn tv_along_zonal_field(state: &CellState) -> f64 {
    let u = &state.u;
    state
        .mesh()
        .edges()
        .iter()
        .filter(|e| e.kind == EdgeKind::Meridional)
        .map(|e| e.length * e.midpoint().phi.cos() * (u[e.left] - u[e.right]).abs())
        .sum()
}

/// `Σ_K |Σ s q_e(u_left, u_right)|`, the discrete total mass of the flux
/// divergence.
pub fn divergence_measure_norm(fv: &FiniteVolume, state: &CellState) -> Result<f64, SchemeError> {
    Ok(fv.flux_divergence(state)?.iter().map(|v| v.abs()).sum())
}

/// One row of a [`DiagnosticsReport`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRow {
    pub time: f64,
    pub mass: f64,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    pub entropy_residual_max: f64,
    pub tv_zonal: f64,
    pub div_measure: f64,
}

#[derive(Debug, Clone, Default)]
pub struct DiagnosticsReport {
    pub rows: Vec<DiagnosticsRow>,
    /// `l1_distance` to a second trajectory at each output time, if given.
    pub pair_l1: Option<Vec<f64>>,
}

pub const CSV_HEADER: &str = "time,mass,l1,l2,linf,entropy_residual_max,tv_zonal,div_measure";

impl DiagnosticsReport {
    /// Row for `state`. `entropy_residual_max` is whatever the caller measured
    /// on the step that produced `state`.
    pub fn row(fv: &FiniteVolume, state: &CellState, entropy_residual_max: f64) -> Result<DiagnosticsRow, SchemeError> {
        Ok(DiagnosticsRow {
            time: state.t,
            mass: state.mass(),
            l1: lq_norm(state, 1.0),
            l2: lq_norm(state, 2.0),
            linf: lq_norm(state, f64::INFINITY),
            entropy_residual_max,
            tv_zonal: tv_along_zonal_field(state),
            div_measure: divergence_measure_norm(fv, state)?,
        })
    }

    pub fn push(&mut self, row: DiagnosticsRow) {
        debug_assert!(self.rows.last().is_none_or(|r| r.time < row.time));
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        if self.pair_l1.is_some() {
            out.push_str(",pair_l1");
        }
        out.push('\n');
        for (i, r) in self.rows.iter().enumerate() {
            let vals = [r.time, r.mass, r.l1, r.l2, r.linf, r.entropy_residual_max, r.tv_zonal, r.div_measure];
            let line: Vec<String> = vals.iter().map(|&v| fmt_f64(v)).collect();
            out.push_str(&line.join(","));
            if let Some(p) = &self.pair_l1 {
                let _ = write!(out, ",{}", p.get(i).map_or(String::new(), |&v| fmt_f64(v)));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flux::{EdgeFunction, FluxField};
    use crate::geometry::Vec3;
    use crate::mesh::{build_web_mesh, CoarseningRule, WebMesh};
    use crate::scheme::{NumericalFluxKind, SchemeConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn mesh() -> Arc<WebMesh> {
        Arc::new(build_web_mesh(8, 16, CoarseningRule::default()).unwrap())
    }

    #[test]
    fn norms_of_constants() {
        let m = mesh();
        assert_eq!(lq_norm(&CellState::constant(m.clone(), 0.0), 2.0), 0.0);
        assert!((lq_norm(&CellState::constant(m.clone(), 1.0), 1.0) - 4.0 * PI).abs() < 1e-12);
        let c = -1.5;
        let s = CellState::constant(m, c);
        for q in [1.0, 2.0, 3.5] {
            let want = c.abs() * (4.0 * PI).powf(1.0 / q);
            assert!((lq_norm(&s, q) - want).abs() < 1e-12 * want);
        }
        assert_eq!(lq_norm(&s, f64::INFINITY), 1.5);
    }

    #[test]
    fn l1_distance_properties() {
        let m = mesh();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = m.n_cells();
        let a = CellState::new(m.clone(), (0..n).map(|_| rng.gen()).collect(), 0.0).unwrap();
        let b = CellState::new(m.clone(), (0..n).map(|_| rng.gen()).collect(), 0.0).unwrap();
        assert_eq!(l1_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(l1_distance(&a, &b).unwrap(), l1_distance(&b, &a).unwrap());
        let other = CellState::constant(Arc::new(build_web_mesh(4, 8, CoarseningRule::None).unwrap()), 0.0);
        assert_eq!(l1_distance(&a, &other), Err(SchemeError::MeshMismatch));
    }

    #[test]
    fn constant_state_has_zero_residuals() {
        let m = mesh();
        let fv = FiniteVolume::new(m.clone(), FluxField::burgers(Vec3::E3), SchemeConfig::default()).unwrap();
        let s = CellState::constant(m, 0.4);
        let dt = fv.cfl_dt(&s).unwrap();
        let next = fv.step(&s, dt).unwrap();
        for k in [-0.5, 0.0, 0.4, 0.5] {
            let r = entropy_residual(&fv, &s, &next, dt, k).unwrap();
            assert!(r.iter().all(|v| v.abs() < 1e-13));
        }
        assert!(divergence_measure_norm(&fv, &s).unwrap() < 1e-12);
        assert_eq!(tv_along_zonal_field(&s), 0.0);
    }

    #[test]
    fn zonally_symmetric_state_has_no_zonal_variation() {
        let m = mesh();
        let u: Vec<f64> = m.cells().iter().map(|c| c.band as f64).collect();
        let s = CellState::new(m, u, 0.0).unwrap();
        assert_eq!(tv_along_zonal_field(&s), 0.0);
    }

    #[test]
    fn anti_diffusive_flux_is_flagged() {
        let m = mesh();
        let fv = FiniteVolume::new(m.clone(), FluxField::linear(Vec3::E3), SchemeConfig::default()).unwrap();
        let n = m.n_cells();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = CellState::new(m, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), 0.0).unwrap();
        let dt = fv.cfl_dt(&s).unwrap();
        // Central flux plus negative dissipation.
        let bad = |e: usize, a: f64, b: f64| {
            let g = fv.edge_function(e);
            0.5 * (g.value(a) + g.value(b)) + 0.5 * (b - a)
        };
        let next = fv.step_with_flux(&s, dt, bad).unwrap();
        // The residual is measured against the scheme's own monotone flux.
        let ks = kruzkov_grid(-1.0, 1.0, 16);
        let r = max_entropy_residual(&fv, &s, &next, dt, &ks).unwrap();
        assert!(r > 1e-6, "residual {r}");
    }

    #[test]
    fn divergence_measure_is_homogeneous_for_linear_flux() {
        let m = mesh();
        let cfg = SchemeConfig::first_order(NumericalFluxKind::LaxFriedrichs, 0.9);
        let fv = FiniteVolume::new(m.clone(), FluxField::linear(Vec3::new(0.0, 0.6, 0.8)), cfg)
            .unwrap()
            .with_value_range(-3.0, 3.0);
        let n = m.n_cells();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = CellState::new(m.clone(), u.clone(), 0.0).unwrap();
        let s3 = CellState::new(m, u.iter().map(|v| 3.0 * v).collect(), 0.0).unwrap();
        let d1 = divergence_measure_norm(&fv, &s).unwrap();
        let d3 = divergence_measure_norm(&fv, &s3).unwrap();
        assert!((d3 - 3.0 * d1).abs() < 1e-12 * d3);
    }

    #[test]
    fn kruzkov_grid_spans_padded_range() {
        let g = kruzkov_grid(0.0, 1.0, 16);
        assert_eq!(g.len(), 16);
        assert!((g[0] + 0.1).abs() < 1e-15 && (g[15] - 1.1).abs() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let m = mesh();
        let fv = FiniteVolume::new(m.clone(), FluxField::linear(Vec3::E3), SchemeConfig::default()).unwrap();
        let mut rep = DiagnosticsReport::default();
        rep.push(DiagnosticsReport::row(&fv, &CellState::constant(m, 1.0), 0.0).unwrap());
        let csv = rep.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.next().unwrap().split(',').count(), 8);
    }
}
