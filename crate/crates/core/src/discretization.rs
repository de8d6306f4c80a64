//! Finite-volume assembly of `-(1/b) div(a grad)` on the unit cell.
//!
//! Nodes sit at cell centers `(k + 1/2) h`, so material interfaces never pass
//! through a node. Neighbouring nodes are coupled through the harmonic mean of
//! their conductivities divided by `h^2`. The mass matrix is the diagonal of
//! nodal `b` values, so every operator is a pencil `A u = lambda B u` with `A`
//! Hermitian positive semidefinite and `B` diagonal positive.
//!
//! Three boundary treatments share the interior stencil:
//!
//! * quasi-periodic (Bloch): the edge that wraps across the face `y_d = 1`
//!   carries the phase `theta_d = exp(i phi_d)` and its conjugate on the way
//!   back, encoding `u(y + e_d) = theta_d u(y)`;
//! * Dirichlet: no wrap edges, a zero value on the cell faces (ghost node with
//!   the opposite value), i.e. `2 a / h^2` on the diagonal;
//! * Neumann: boundary faces carry no flux.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{classify_with_thickness, PeriodicMedium, Region, UnitCellGeometry};
use crate::sparse::CsrMatrix;

/// Smallest allowed number of points per dimension.
pub const MIN_POINTS: usize = 8;

/// Uniform cell-centered grid on `[0, 1)^n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    dim: usize,
    points: usize,
}

impl Grid {
    pub fn new(dim: usize, points: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Resolution(format!("grid dimension must be 2 or 3, got {dim}")));
        }
        if points < MIN_POINTS {
            return Err(Error::Resolution(format!(
                "need at least {MIN_POINTS} points per dimension, got {points}"
            )));
        }
        Ok(Self { dim, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.points as f64
    }

    /// Total number of nodes `N^n`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Per-axis indices of a node; axis 0 varies fastest.
    pub fn multi_index(&self, mut node: usize) -> Vec<usize> {
        let mut idx = Vec::with_capacity(self.dim);
        for _ in 0..self.dim {
            idx.push(node % self.points);
            node /= self.points;
        }
        idx
    }

    pub fn node(&self, multi: &[usize]) -> usize {
        multi.iter().rev().fold(0, |acc, &k| acc * self.points + k)
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        let h = self.spacing();
        self.multi_index(node)
            .into_iter()
            .map(|k| (k as f64 + 0.5) * h)
            .collect()
    }

    /// Node reached by one step along `axis`, and whether the step wrapped
    /// across the cell face.
    pub fn step(&self, node: usize, axis: usize, forward: bool) -> (usize, bool) {
        let stride = self.points.pow(axis as u32);
        let k = (node / stride) % self.points;
        if forward {
            if k + 1 == self.points {
                (node - k * stride, true)
            } else {
                (node + stride, false)
            }
        } else if k == 0 {
            (node + (self.points - 1) * stride, true)
        } else {
            (node - stride, false)
        }
    }

    /// Band-reducing node order: each axis is visited as `0, N-1, 1, N-2, ...`
    /// so that wrap neighbours are adjacent. Returns the position of each node.
    pub fn band_positions(&self) -> Vec<usize> {
        let n = self.points;
        let mut slot = vec![0usize; n];
        for p in 0..n {
            let k = if p % 2 == 0 { p / 2 } else { n - 1 - (p - 1) / 2 };
            slot[k] = p;
        }
        (0..self.len())
            .map(|node| {
                self.multi_index(node)
                    .iter()
                    .rev()
                    .fold(0, |acc, &k| acc * n + slot[k])
            })
            .collect()
    }
}

/// How thin shells are represented on a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResolutionMode {
    /// Shell resolved by at least three cell layers; coefficients sampled pointwise.
    Direct,
    /// Shell collapsed onto one layer of thickness `layer` (= h) with
    /// conductivity `a_j * layer`, keeping the areal conductance `a_j`.
    Snap { layer: f64 },
}

impl ResolutionMode {
    pub fn label(&self) -> &'static str {
        match self {
            ResolutionMode::Direct => "direct",
            ResolutionMode::Snap { .. } => "snap",
        }
    }
}

/// Direct mode when `delta >= 3 h` (ties go to direct), snap mode otherwise.
pub fn validate_resolution(medium: &PeriodicMedium, grid: &Grid) -> ResolutionMode {
    let three_h = 3.0 / grid.points() as f64;
    if medium.geometry().inclusion_count() == 0 || medium.delta() >= three_h {
        ResolutionMode::Direct
    } else {
        ResolutionMode::Snap {
            layer: grid.spacing(),
        }
    }
}

/// Nodal conductivity and density under the given shell representation.
pub fn sample_coefficients(
    medium: &PeriodicMedium,
    grid: &Grid,
    mode: ResolutionMode,
) -> (Vec<f64>, Vec<f64>) {
    let geom = medium.geometry();
    let b_incl = medium.coefficients().b();
    (0..grid.len())
        .map(|node| {
            let y = grid.coords(node);
            match mode {
                ResolutionMode::Direct => (medium.eval_a(&y), medium.eval_b(&y)),
                ResolutionMode::Snap { layer } => match classify_with_thickness(geom, &y, layer) {
                    Region::Bulk => (medium.bulk_a(), 1.0),
                    Region::Inclusion(j) => (medium.bulk_a(), b_incl[j]),
                    Region::Shell(j) => (medium.coefficients().a()[j] * layer, b_incl[j]),
                },
            }
        })
        .unzip()
}

fn check_inclusions_resolved(geom: &UnitCellGeometry, grid: &Grid, thickness: f64) -> Result<()> {
    if geom.inclusion_count() == 0 {
        return Ok(());
    }
    if 2.0 * geom.radius() < 4.0 * grid.spacing() {
        return Err(Error::Resolution(format!(
            "ball diameter {} spans fewer than 4 cells at N = {}",
            2.0 * geom.radius(),
            grid.points()
        )));
    }
    let mut inner = vec![false; geom.inclusion_count()];
    for node in 0..grid.len() {
        if let Region::Inclusion(j) = classify_with_thickness(geom, &grid.coords(node), thickness) {
            inner[j] = true;
        }
    }
    if let Some(j) = inner.iter().position(|seen| !seen) {
        return Err(Error::Resolution(format!(
            "inclusion {j} has no interior node at N = {}",
            grid.points()
        )));
    }
    Ok(())
}

/// Boundary treatment of an assembled operator.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryCondition {
    /// Quasi-periodic with phases `phi_d` in `[0, 2 pi)`.
    Bloch(Vec<f64>),
    Dirichlet,
    Neumann,
}

/// Assembled pencil `(A, B)` on the unit cell.
#[derive(Debug, Clone)]
pub struct CellOperator {
    pub stiffness: CsrMatrix,
    pub mass: Vec<f64>,
    pub boundary: BoundaryCondition,
    pub mode: ResolutionMode,
    /// Band-reducing position of each node, see [`Grid::band_positions`].
    pub ordering: Vec<usize>,
}

impl CellOperator {
    pub fn dim(&self) -> usize {
        self.mass.len()
    }
}

fn harmonic_mean(x: f64, y: f64) -> f64 {
    2.0 * x * y / (x + y)
}

#[allow(clippy::needless_range_loop)]
fn assemble(medium: &PeriodicMedium, grid: &Grid, boundary: BoundaryCondition) -> Result<CellOperator> {
    if medium.dim() != grid.dim() {
        return Err(Error::Resolution(format!(
            "medium is {}-dimensional, grid is {}-dimensional",
            medium.dim(),
            grid.dim()
        )));
    }
    let mode = validate_resolution(medium, grid);
    let thickness = match mode {
        ResolutionMode::Direct => medium.delta(),
        ResolutionMode::Snap { layer } => layer,
    };
    check_inclusions_resolved(medium.geometry(), grid, thickness)?;
    let (a, b) = sample_coefficients(medium, grid, mode);
    let h2 = grid.spacing() * grid.spacing();
    let phases: Vec<Complex64> = match &boundary {
        BoundaryCondition::Bloch(phi) => {
            if phi.len() != grid.dim() {
                return Err(Error::Resolution(format!(
                    "theta has {} components for a {}-dimensional cell",
                    phi.len(),
                    grid.dim()
                )));
            }
            phi.iter().map(|&p| Complex64::from_polar(1.0, p)).collect()
        }
        _ => Vec::new(),
    };

    let mut triplets = Vec::with_capacity(grid.len() * (2 * grid.dim() + 1));
    for node in 0..grid.len() {
        for axis in 0..grid.dim() {
            let (next, wrapped) = grid.step(node, axis, true);
            let t = harmonic_mean(a[node], a[next]) / h2;
            if !wrapped {
                triplets.push((node, node, Complex64::new(t, 0.0)));
                triplets.push((next, next, Complex64::new(t, 0.0)));
                triplets.push((node, next, Complex64::new(-t, 0.0)));
                triplets.push((next, node, Complex64::new(-t, 0.0)));
                continue;
            }
            match boundary {
                BoundaryCondition::Bloch(_) => {
                    let theta = phases[axis];
                    triplets.push((node, node, Complex64::new(t, 0.0)));
                    triplets.push((next, next, Complex64::new(t, 0.0)));
                    triplets.push((node, next, -t * theta));
                    triplets.push((next, node, -t * theta.conj()));
                }
                BoundaryCondition::Dirichlet => {
                    // `node` touches the face y_axis = 1, `next` the face y_axis = 0
                    triplets.push((node, node, Complex64::new(2.0 * a[node] / h2, 0.0)));
                    triplets.push((next, next, Complex64::new(2.0 * a[next] / h2, 0.0)));
                }
                BoundaryCondition::Neumann => {}
            }
        }
    }
    Ok(CellOperator {
        stiffness: CsrMatrix::from_triplets(grid.len(), &triplets),
        mass: b,
        boundary,
        mode,
        ordering: grid.band_positions(),
    })
}

/// Quasi-periodic operator for the torus point with phases `phi`.
pub fn assemble_bloch(medium: &PeriodicMedium, grid: &Grid, phases: &[f64]) -> Result<CellOperator> {
    assemble(medium, grid, BoundaryCondition::Bloch(phases.to_vec()))
}

pub fn assemble_dirichlet(medium: &PeriodicMedium, grid: &Grid) -> Result<CellOperator> {
    assemble(medium, grid, BoundaryCondition::Dirichlet)
}

pub fn assemble_neumann(medium: &PeriodicMedium, grid: &Grid) -> Result<CellOperator> {
    assemble(medium, grid, BoundaryCondition::Neumann)
}

/// One radial layer `[previous outer radius, outer)` with constant coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialLayer {
    pub outer: f64,
    pub a: f64,
    pub b: f64,
    pub cells: usize,
}

/// Symmetric tridiagonal form `W^-1/2 K W^-1/2` of the radial operator.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialOperator {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
    /// Cell faces, from 0 to the outer radius.
    pub faces: Vec<f64>,
}

impl RadialOperator {
    pub fn cells(&self) -> usize {
        self.diag.len()
    }

    /// The `k` smallest eigenvalues.
    pub fn smallest(&self, k: usize) -> Result<Vec<f64>> {
        crate::eigensolver::tridiagonal_smallest(&self.diag, &self.off, k)
    }
}

/// Discretizes `-(1/(b rho^(n-1))) d/drho (a rho^(n-1) d/drho)` on `(0, R)`,
/// regular at the origin and Dirichlet at `R`. Layer boundaries are cell faces.
pub fn assemble_radial_layers(n: usize, layers: &[RadialLayer]) -> Result<RadialOperator> {
    if n != 2 && n != 3 {
        return Err(Error::Resolution(format!("radial dimension must be 2 or 3, got {n}")));
    }
    let mut faces = vec![0.0];
    let mut a = Vec::new();
    let mut b = Vec::new();
    for layer in layers {
        let start = *faces.last().unwrap();
        if !(layer.outer > start) || layer.cells == 0 || !(layer.a > 0.0) || !(layer.b > 0.0) {
            return Err(Error::Resolution(format!("invalid radial layer {layer:?}")));
        }
        let width = (layer.outer - start) / layer.cells as f64;
        for c in 1..=layer.cells {
            faces.push(if c == layer.cells { layer.outer } else { start + width * c as f64 });
            a.push(layer.a);
            b.push(layer.b);
        }
    }
    let cells = a.len();
    if cells < 2 {
        return Err(Error::Resolution("radial grid needs at least two cells".into()));
    }
    let p = (n - 1) as i32;
    let centers: Vec<f64> = faces.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let weights: Vec<f64> = (0..cells)
        .map(|i| b[i] * (faces[i + 1].powi(n as i32) - faces[i].powi(n as i32)) / n as f64)
        .collect();
    let mut k_diag = vec![0.0; cells];
    let mut k_off = vec![0.0; cells - 1];
    for i in 0..cells - 1 {
        let f = faces[i + 1];
        let resistance = (f - centers[i]) / a[i] + (centers[i + 1] - f) / a[i + 1];
        let g = f.powi(p) / resistance;
        k_diag[i] += g;
        k_diag[i + 1] += g;
        k_off[i] = -g;
    }
    let outer = faces[cells];
    k_diag[cells - 1] += outer.powi(p) * a[cells - 1] / (outer - centers[cells - 1]);
    let diag = (0..cells).map(|i| k_diag[i] / weights[i]).collect();
    let off = (0..cells - 1)
        .map(|i| k_off[i] / (weights[i] * weights[i + 1]).sqrt())
        .collect();
    Ok(RadialOperator { diag, off, faces })
}

/// Radial operator of inclusion `index` of `medium` on the ball of radius
/// `r + kappa`: inner ball, shell, then bulk annulus. `cells_per_unit` sets the
/// resolution; the shell always receives at least `min_shell_cells` cells.
pub fn assemble_radial(
    medium: &PeriodicMedium,
    index: usize,
    cells_per_unit: usize,
    min_shell_cells: usize,
) -> Result<RadialOperator> {
    let geom = medium.geometry();
    if index >= geom.inclusion_count() {
        return Err(Error::Geometry(format!(
            "inclusion index {index} out of range for {} inclusions",
            geom.inclusion_count()
        )));
    }
    // kappa of the full cell, so the annulus stays clear of other balls
    let kappa = crate::geometry::validate_geometry(geom)?;
    let r = geom.radius();
    let delta = medium.delta();
    let cells_for = |len: f64, min: usize| ((len * cells_per_unit as f64).ceil() as usize).max(min);
    let b_j = medium.coefficients().b()[index];
    let layers = [
        RadialLayer {
            outer: r - delta,
            a: medium.bulk_a(),
            b: b_j,
            cells: cells_for(r - delta, 4),
        },
        RadialLayer {
            outer: r,
            a: medium.shell_a()[index],
            b: b_j,
            cells: cells_for(delta, min_shell_cells.max(1)),
        },
        RadialLayer {
            outer: r + kappa,
            a: medium.bulk_a(),
            b: 1.0,
            cells: cells_for(kappa, 4),
        },
    ];
    assemble_radial_layers(geom.dim(), &layers)
}
