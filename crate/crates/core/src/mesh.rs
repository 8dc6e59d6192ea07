//! Web-like latitude/longitude mesh of the sphere.
//!
//! Latitude lines are uniformly spaced. Within a band the longitude spacing is
//! uniform, and the longitude count is halved toward the poles according to a
//! [`CoarseningRule`]. The outermost band on each side is a single polar cap
//! cell. A latitude line separating bands with different counts is split into
//! the finer side's sub-edges, so every edge has exactly one cell per side.
//!
//! Orientation: every edge carries a unit normal `nu` pointing from its
//! `left` cell into its `right` cell. `nu` is east-pointing on meridional
//! edges and north-pointing on zonal edges. An edge is stored with its
//! endpoints ordered so that the traversal tangent `tau` from `start` to
//! `end` satisfies `nu = tau x n`: meridional edges run south to north and
//! zonal edges run east to west.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt::Write as _;

use thiserror::Error;

use crate::fmt::fmt_f64;
use crate::geometry::{great_circle_distance, zonal_patch_area, SpherePoint, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("invalid resolution: {0}")]
    InvalidResolution(String),
    #[error("unknown cell id {0}")]
    UnknownCell(usize),
}

/// When to halve the longitude count of a band, walking from the equator
/// toward a pole.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoarseningRule {
    /// Every band keeps the equatorial count.
    None,
    /// A band at mid-latitude `phi_mid` is coarsened `k` times, where `k`
    /// counts the levels `t, t^2, t^3, ...` that `cos(phi_mid)` lies below.
    CosThreshold(f64),
}

impl Default for CoarseningRule {
    fn default() -> Self {
        CoarseningRule::CosThreshold(0.5)
    }
}

impl CoarseningRule {
    /// Builds a rule from a threshold; `0` disables merging.
    pub fn from_threshold(t: f64) -> Result<Self, MeshError> {
        if t == 0.0 {
            Ok(CoarseningRule::None)
        } else if t > 0.0 && t < 1.0 {
            Ok(CoarseningRule::CosThreshold(t))
        } else {
            Err(MeshError::InvalidResolution(format!("merge threshold must lie in [0, 1), got {t}")))
        }
    }

    pub fn threshold(&self) -> f64 {
        match *self {
            CoarseningRule::None => 0.0,
            CoarseningRule::CosThreshold(t) => t,
        }
    }

    /// Number of halvings for a band centred at `phi_mid`.
    pub fn level(&self, phi_mid: f64) -> u32 {
        match *self {
            CoarseningRule::None => 0,
            CoarseningRule::CosThreshold(t) => {
                let c = phi_mid.cos();
                let mut level = 0;
                let mut bound = t;
                while c < bound && level < 30 {
                    level += 1;
                    bound *= t;
                }
                level
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Quad,
    SouthCap,
    NorthCap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub id: usize,
    pub lambda_w: f64,
    pub lambda_e: f64,
    pub phi_s: f64,
    pub phi_n: f64,
    pub area: f64,
    pub band: usize,
    pub kind: CellKind,
}

impl Cell {
    pub fn is_cap(&self) -> bool {
        self.kind != CellKind::Quad
    }

    /// Representative point used in output files: the coordinate midpoint for
    /// quads, the pole for caps.
    pub fn center(&self) -> SpherePoint {
        match self.kind {
            CellKind::Quad => SpherePoint::raw(0.5 * (self.lambda_w + self.lambda_e), 0.5 * (self.phi_s + self.phi_n)),
            CellKind::SouthCap => SpherePoint::raw(0.0, -FRAC_PI_2),
            CellKind::NorthCap => SpherePoint::raw(0.0, FRAC_PI_2),
        }
    }

    /// Area-weighted mean latitude.
    pub fn centroid_phi(&self) -> f64 {
        let g = |p: f64| p * p.sin() + p.cos();
        (g(self.phi_n) - g(self.phi_s)) / (self.phi_n.sin() - self.phi_s.sin())
    }

    /// Whether a point lies on the closed cell, up to `tol`.
    fn contains(&self, p: SpherePoint, tol: f64) -> bool {
        if p.phi < self.phi_s - tol || p.phi > self.phi_n + tol {
            return false;
        }
        if self.is_cap() {
            return true;
        }
        let width = self.lambda_e - self.lambda_w;
        let off = (p.lambda - self.lambda_w).rem_euclid(TAU);
        off <= width + tol || off >= TAU - tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Meridional,
    Zonal,
    PolarCapRim,
}

impl EdgeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EdgeKind::Meridional => "meridional",
            EdgeKind::Zonal => "zonal",
            EdgeKind::PolarCapRim => "polar-cap-rim",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: usize,
    pub kind: EdgeKind,
    pub start: SpherePoint,
    pub end: SpherePoint,
    pub length: f64,
    pub left: usize,
    pub right: usize,
}

impl Edge {
    /// Coordinate midpoint of the edge.
    pub fn midpoint(&self) -> SpherePoint {
        match self.kind {
            EdgeKind::Meridional => SpherePoint::raw(self.start.lambda, 0.5 * (self.start.phi + self.end.phi)),
            _ => SpherePoint::raw(0.5 * (self.start.lambda + self.end.lambda), self.start.phi),
        }
    }
}

/// Side of a cell across which a neighbour lies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    East,
    West,
    North,
    South,
}

/// One entry of a cell boundary: the edge and `sign = +1` when the edge
/// normal points out of the cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub edge: usize,
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub phi_s: f64,
    pub phi_n: f64,
    pub first_cell: usize,
    pub n_cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WebMesh {
    cells: Vec<Cell>,
    edges: Vec<Edge>,
    boundaries: Vec<Vec<BoundaryEdge>>,
    bands: Vec<Band>,
    equator_lon_count: usize,
    rule: CoarseningRule,
}

pub fn build_web_mesh(n_bands: usize, n_lon_equator: usize, rule: CoarseningRule) -> Result<WebMesh, MeshError> {
    WebMesh::build(n_bands, n_lon_equator, rule)
}

impl WebMesh {
    pub fn build(n_bands: usize, n_lon_equator: usize, rule: CoarseningRule) -> Result<Self, MeshError> {
        if n_bands < 4 || !n_bands.is_multiple_of(2) {
            return Err(MeshError::InvalidResolution(format!("n_bands must be even and >= 4, got {n_bands}")));
        }
        if n_lon_equator < 4 {
            return Err(MeshError::InvalidResolution(format!("n_lon_equator must be >= 4, got {n_lon_equator}")));
        }
        let dphi = PI / n_bands as f64;
        let half = (n_bands / 2) as f64;
        let lat = |j: usize| -> f64 {
            if j == 0 {
                -FRAC_PI_2
            } else if j == n_bands {
                FRAC_PI_2
            } else {
                (j as f64 - half) * dphi
            }
        };

        // Longitude count of each band; caps are marked with 1.
        let mut counts = vec![1usize; n_bands];
        for (j, count) in counts.iter_mut().enumerate().take(n_bands - 1).skip(1) {
            let phi_mid = 0.5 * (lat(j) + lat(j + 1));
            let level = rule.level(phi_mid);
            let div = 1usize.checked_shl(level).unwrap_or(usize::MAX);
            if !n_lon_equator.is_multiple_of(div) || n_lon_equator / div < 2 {
                return Err(MeshError::InvalidResolution(format!(
                    "n_lon_equator = {n_lon_equator} is not divisible by 2^{level} \
                     (required by the band at phi_mid = {phi_mid:.6})"
                )));
            }
            *count = n_lon_equator / div;
        }

        let mut cells = Vec::new();
        let mut bands = Vec::with_capacity(n_bands);
        for (j, &n) in counts.iter().enumerate() {
            let (phi_s, phi_n) = (lat(j), lat(j + 1));
            let first_cell = cells.len();
            if j == 0 || j == n_bands - 1 {
                let kind = if j == 0 { CellKind::SouthCap } else { CellKind::NorthCap };
                cells.push(Cell {
                    id: first_cell,
                    lambda_w: -PI,
                    lambda_e: PI,
                    phi_s,
                    phi_n,
                    area: zonal_patch_area(-PI, PI, phi_s, phi_n).expect("cap range is valid"),
                    band: j,
                    kind,
                });
            } else {
                for i in 0..n {
                    let (lw, le) = band_lambda(n, i);
                    cells.push(Cell {
                        id: first_cell + i,
                        lambda_w: lw,
                        lambda_e: le,
                        phi_s,
                        phi_n,
                        area: zonal_patch_area(lw, le, phi_s, phi_n).expect("cell range is valid"),
                        band: j,
                        kind: CellKind::Quad,
                    });
                }
            }
            bands.push(Band { phi_s, phi_n, first_cell, n_cells: n });
        }

        let mut edges: Vec<Edge> = Vec::new();
        let mut boundaries: Vec<Vec<BoundaryEdge>> = vec![Vec::new(); cells.len()];
        let mut push_edge = |edges: &mut Vec<Edge>, mut e: Edge| {
            e.id = edges.len();
            boundaries[e.left].push(BoundaryEdge { edge: e.id, sign: 1 });
            boundaries[e.right].push(BoundaryEdge { edge: e.id, sign: -1 });
            edges.push(e);
        };

        // Meridional edges; edge i sits on the western side of cell i.
        for band in bands.iter().take(n_bands - 1).skip(1) {
            let n = band.n_cells;
            for i in 0..n {
                let (lw, _) = band_lambda(n, i);
                push_edge(
                    &mut edges,
                    Edge {
                        id: 0,
                        kind: EdgeKind::Meridional,
                        start: SpherePoint::raw(lw, band.phi_s),
                        end: SpherePoint::raw(lw, band.phi_n),
                        length: band.phi_n - band.phi_s,
                        left: band.first_cell + (i + n - 1) % n,
                        right: band.first_cell + i,
                    },
                );
            }
        }

        // Zonal edges on each interior latitude line, split on the finer side.
        for j in 1..n_bands {
            let (south, north) = (&bands[j - 1], &bands[j]);
            let phi = south.phi_n;
            let m = south.n_cells.max(north.n_cells);
            let kind = if j == 1 || j == n_bands - 1 { EdgeKind::PolarCapRim } else { EdgeKind::Zonal };
            for k in 0..m {
                let (la, lb) = band_lambda(m, k);
                push_edge(
                    &mut edges,
                    Edge {
                        id: 0,
                        kind,
                        start: SpherePoint::raw(lb, phi),
                        end: SpherePoint::raw(la, phi),
                        length: (lb - la) * phi.cos(),
                        left: south.first_cell + k * south.n_cells / m,
                        right: north.first_cell + k * north.n_cells / m,
                    },
                );
            }
        }

        Ok(Self { cells, edges, boundaries, bands, equator_lon_count: n_lon_equator, rule })
    }

    /// Assembles a mesh from raw parts without any checks. Intended for
    /// building defective fixtures for [`WebMesh::validate`].
    pub fn from_parts(
        cells: Vec<Cell>,
        edges: Vec<Edge>,
        boundaries: Vec<Vec<BoundaryEdge>>,
        bands: Vec<Band>,
        equator_lon_count: usize,
        rule: CoarseningRule,
    ) -> Self {
        Self { cells, edges, boundaries, bands, equator_lon_count, rule }
    }

    #[allow(clippy::type_complexity)]
    pub fn into_parts(self) -> (Vec<Cell>, Vec<Edge>, Vec<Vec<BoundaryEdge>>, Vec<Band>, usize, CoarseningRule) {
        (self.cells, self.edges, self.boundaries, self.bands, self.equator_lon_count, self.rule)
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_bands(&self) -> usize {
        self.bands.len()
    }

    pub fn equator_lon_count(&self) -> usize {
        self.equator_lon_count
    }

    pub fn rule(&self) -> CoarseningRule {
        self.rule
    }

    pub fn total_area(&self) -> f64 {
        self.cells.iter().map(|c| c.area).sum()
    }

    /// Signed boundary of a cell; `sign = +1` when the edge normal points out.
    pub fn boundary(&self, cell: usize) -> Result<&[BoundaryEdge], MeshError> {
        self.boundaries.get(cell).map(Vec::as_slice).ok_or(MeshError::UnknownCell(cell))
    }

    pub(crate) fn boundary_unchecked(&self, cell: usize) -> &[BoundaryEdge] {
        &self.boundaries[cell]
    }

    /// Neighbours of `cell`, each with the separating edge and the side of
    /// `cell` it lies on.
    pub fn neighbors(&self, cell: usize) -> Result<Vec<(usize, usize, Side)>, MeshError> {
        Ok(self
            .boundary(cell)?
            .iter()
            .map(|b| {
                let e = &self.edges[b.edge];
                let mine_left = e.left == cell;
                let other = if mine_left { e.right } else { e.left };
                let side = match (e.kind, mine_left) {
                    (EdgeKind::Meridional, true) => Side::East,
                    (EdgeKind::Meridional, false) => Side::West,
                    (_, true) => Side::North,
                    (_, false) => Side::South,
                };
                (b.edge, other, side)
            })
            .collect())
    }

    /// Largest great-circle diameter over all cells.
    pub fn max_cell_diameter(&self) -> f64 {
        self.cells.iter().map(cell_diameter).fold(0.0, f64::max)
    }

    /// Number of latitude lines whose two sides have different longitude
    /// counts (polar cap rims included).
    pub fn nonconformal_lines(&self) -> Vec<f64> {
        self.bands.windows(2).filter(|w| w[0].n_cells != w[1].n_cells).map(|w| w[0].phi_n).collect()
    }

    /// Consistency checks; see [`ValidationReport`].
    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }

    /// Debug dump: one row per cell, then one row per edge.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("record,id,lambda_w,lambda_e,phi_s,phi_n,area\n");
        for c in &self.cells {
            let _ = writeln!(
                s,
                "cell,{},{},{},{},{},{}",
                c.id,
                fmt_f64(c.lambda_w),
                fmt_f64(c.lambda_e),
                fmt_f64(c.phi_s),
                fmt_f64(c.phi_n),
                fmt_f64(c.area)
            );
        }
        s.push_str("record,id,kind,start_lambda,start_phi,end_lambda,end_phi,length,left,right\n");
        for e in &self.edges {
            let _ = writeln!(
                s,
                "edge,{},{},{},{},{},{},{},{},{}",
                e.id,
                e.kind.as_str(),
                fmt_f64(e.start.lambda),
                fmt_f64(e.start.phi),
                fmt_f64(e.end.lambda),
                fmt_f64(e.end.phi),
                fmt_f64(e.length),
                e.left,
                e.right
            );
        }
        s
    }
}

/// West/east longitudes of cell `i` in a band of `n` cells.
fn band_lambda(n: usize, i: usize) -> (f64, f64) {
    let d = TAU / n as f64;
    let lw = -PI + i as f64 * d;
    let le = if i + 1 == n { PI } else { -PI + (i + 1) as f64 * d };
    (lw, le)
}

fn cell_diameter(c: &Cell) -> f64 {
    if c.is_cap() {
        return 2.0 * (c.phi_n - c.phi_s);
    }
    const K: usize = 6;
    let mut pts = Vec::with_capacity(4 * K);
    for k in 0..K {
        let t = k as f64 / (K - 1) as f64;
        let l = c.lambda_w + t * (c.lambda_e - c.lambda_w);
        let p = c.phi_s + t * (c.phi_n - c.phi_s);
        pts.push(SpherePoint::raw(l, c.phi_s).cart().as_vec());
        pts.push(SpherePoint::raw(l, c.phi_n).cart().as_vec());
        pts.push(SpherePoint::raw(c.lambda_w, p).cart().as_vec());
        pts.push(SpherePoint::raw(c.lambda_e, p).cart().as_vec());
    }
    let mut d: f64 = 0.0;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            d = d.max(great_circle_distance(*a, *b));
        }
    }
    d
}

const VALIDATION_TOL: f64 = 1e-12;

/// Outcome of [`WebMesh::validate`]. `pass` is true iff every check holds
/// within `1e-12`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    /// `sum(area) - 4 pi`.
    pub area_error: f64,
    /// Largest telescoping residual over the oriented boundary loops.
    pub loop_closure_max: f64,
    /// Cells whose boundary does not close or whose stored signs disagree with
    /// the edge orientation.
    pub orientation_failures: Vec<usize>,
    /// Edges not shared by exactly two distinct cells with opposite signs.
    pub two_sided_failures: Vec<usize>,
    /// Edges or cells whose sub-edge splitting is inconsistent.
    pub split_failures: Vec<String>,
    pub pass: bool,
}

impl ValidationReport {
    pub fn summary(&self) -> String {
        format!(
            "{}: area_error={:e} loop_closure_max={:e} orientation_failures={} \
             two_sided_failures={} split_failures={}",
            if self.pass { "PASS" } else { "FAIL" },
            self.area_error,
            self.loop_closure_max,
            self.orientation_failures.len(),
            self.two_sided_failures.len(),
            self.split_failures.len()
        )
    }
}

// Smooth vertex functions used to test loop closure.
fn probe_functions() -> [fn(Vec3) -> f64; 3] {
    [
        |x| x.x1 + 2.0 * x.x2 + 3.0 * x.x3,
        |x| x.x1 * x.x2 + x.x3 * x.x3 - 0.3 * x.x2,
        |x| (0.7 * x.x1 - 0.4 * x.x3).exp() + x.x2.powi(3),
    ]
}

fn validate(mesh: &WebMesh) -> ValidationReport {
    let n_cells = mesh.cells.len();
    let area_error = mesh.total_area() - 4.0 * PI;

    let mut orientation_failures = Vec::new();
    let mut loop_closure_max: f64 = 0.0;
    let probes = probe_functions();
    for c in 0..n_cells {
        let Some(bnd) = mesh.boundaries.get(c) else {
            orientation_failures.push(c);
            continue;
        };
        let mut ok = !bnd.is_empty();
        let mut sums = [0.0f64; 3];
        for b in bnd {
            let Some(e) = mesh.edges.get(b.edge) else {
                ok = false;
                continue;
            };
            let sign = if e.left == c && e.right != c {
                1.0
            } else if e.right == c && e.left != c {
                -1.0
            } else {
                ok = false;
                continue;
            };
            if sign != f64::from(b.sign) {
                ok = false;
            }
            let (s, t) = (e.start.cart().as_vec(), e.end.cart().as_vec());
            for (sum, h) in sums.iter_mut().zip(probes.iter()) {
                *sum += sign * (h(t) - h(s));
            }
        }
        let closure = sums.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        loop_closure_max = loop_closure_max.max(closure);
        if !ok || closure > VALIDATION_TOL {
            orientation_failures.push(c);
        }
    }

    let mut seen: Vec<Vec<(usize, i8)>> = vec![Vec::new(); mesh.edges.len()];
    for (c, bnd) in mesh.boundaries.iter().enumerate() {
        for b in bnd {
            if let Some(v) = seen.get_mut(b.edge) {
                v.push((c, b.sign));
            }
        }
    }
    let two_sided_failures: Vec<usize> = mesh
        .edges
        .iter()
        .enumerate()
        .filter(|(i, e)| {
            let v = &seen[*i];
            !(v.len() == 2
                && e.left != e.right
                && e.left < n_cells
                && e.right < n_cells
                && v.contains(&(e.left, 1))
                && v.contains(&(e.right, -1)))
        })
        .map(|(i, _)| i)
        .collect();

    let mut split_failures = Vec::new();
    for e in &mesh.edges {
        for &c in &[e.left, e.right] {
            match mesh.cells.get(c) {
                Some(cell) => {
                    if !(cell.contains(e.start, VALIDATION_TOL) && cell.contains(e.end, VALIDATION_TOL)) {
                        split_failures.push(format!("edge {} endpoints not on cell {}", e.id, c));
                    }
                }
                None => split_failures.push(format!("edge {} references missing cell {}", e.id, c)),
            }
        }
        let exact = match e.kind {
            EdgeKind::Meridional => e.end.phi - e.start.phi,
            _ => (e.start.lambda - e.end.lambda) * e.start.phi.cos(),
        };
        if !(exact > 0.0) || (exact - e.length).abs() > VALIDATION_TOL {
            split_failures.push(format!("edge {} length {} != exact {}", e.id, e.length, exact));
        }
    }
    // Each cell's boundary must cover its exact perimeter.
    for (c, cell) in mesh.cells.iter().enumerate() {
        let Some(bnd) = mesh.boundaries.get(c) else { continue };
        let mut perimeter = 0.0;
        for b in bnd {
            if let Some(e) = mesh.edges.get(b.edge) {
                perimeter += e.length;
            }
        }
        let width = cell.lambda_e - cell.lambda_w;
        let exact = match cell.kind {
            CellKind::Quad => width * (cell.phi_s.cos() + cell.phi_n.cos()) + 2.0 * (cell.phi_n - cell.phi_s),
            CellKind::SouthCap => TAU * cell.phi_n.cos(),
            CellKind::NorthCap => TAU * cell.phi_s.cos(),
        };
        if (perimeter - exact).abs() > VALIDATION_TOL * exact.max(1.0) * 10.0 {
            split_failures.push(format!("cell {c} perimeter {perimeter} != exact {exact}"));
        }
    }

    let pass = area_error.abs() <= VALIDATION_TOL
        && orientation_failures.is_empty()
        && two_sided_failures.is_empty()
        && split_failures.is_empty();
    ValidationReport { area_error, loop_closure_max, orientation_failures, two_sided_failures, split_failures, pass }
}
