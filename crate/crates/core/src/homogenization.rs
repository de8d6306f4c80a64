//! Periodic cell problem on the perforated cell `F` and the effective matrix.
//!
//! The discrete problem is variational: `v_k` minimizes
//! `sum_faces h^n (delta_dk - (v_q - v_p)/h)^2` over the faces `(p, q)` joining
//! two nodes of `F` (with periodic wrap). Faces that touch a ball node are
//! dropped, which imposes the Neumann data `n_k` on the staircase boundary.
//! The effective matrix is the normalized energy of the minimizers, so it is
//! symmetric, positive semidefinite and bounded by the identity by construction.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::discretization::Grid;
use crate::error::{Error, Result};
use crate::geometry::{distance, UnitCellGeometry};

/// Relative tolerance of the conjugate-gradient solves.
pub const CG_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct CellSolution {
    pub grid: Grid,
    /// Nodes of the perforated cell.
    pub in_f: Vec<bool>,
    /// `fields[k]` is `v_k` on the grid, zero on ball nodes, mean zero over `F`.
    pub fields: Vec<Vec<f64>>,
    /// Relative residual of each solve.
    pub residuals: Vec<f64>,
    pub iterations: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveMatrix {
    pub a_hat: Vec<Vec<f64>>,
}

impl EffectiveMatrix {
    pub fn dim(&self) -> usize {
        self.a_hat.len()
    }

    pub fn symmetry_defect(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (self.a_hat[i][j] - self.a_hat[j][i]).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let n = self.dim();
        let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (self.a_hat[i][j] + self.a_hat[j][i]));
        SymmetricEigen::new(m).eigenvalues.min()
    }
}

fn perforation_mask(geom: &UnitCellGeometry, grid: &Grid) -> Vec<bool> {
    (0..grid.len())
        .map(|node| {
            let y = grid.coords(node);
            geom.centers().iter().all(|c| distance(&y, c) > geom.radius())
        })
        .collect()
}

/// Faces `(lower, upper, axis)` with both ends in `F`.
fn faces(grid: &Grid, in_f: &[bool]) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for node in 0..grid.len() {
        if !in_f[node] {
            continue;
        }
        for axis in 0..grid.dim() {
            let (next, _) = grid.step(node, axis, true);
            if in_f[next] {
                out.push((node, next, axis));
            }
        }
    }
    out
}

fn apply_laplacian(faces: &[(usize, usize, usize)], x: &[f64], y: &mut [f64]) {
    y.iter_mut().for_each(|v| *v = 0.0);
    for &(p, q, _) in faces {
        let d = x[q] - x[p];
        y[q] += d;
        y[p] -= d;
    }
}

fn project_mean(x: &mut [f64], in_f: &[bool], count: usize) {
    let mean = x.iter().zip(in_f).filter(|(_, &f)| f).map(|(v, _)| v).sum::<f64>() / count as f64;
    x.iter_mut().zip(in_f).for_each(|(v, &f)| *v = if f { *v - mean } else { 0.0 });
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Conjugate gradients for the singular periodic Laplacian on `F`, iterating
/// in the mean-zero subspace.
fn solve_mean_zero(
    faces: &[(usize, usize, usize)],
    rhs: &[f64],
    in_f: &[bool],
    count: usize,
) -> Result<(Vec<f64>, f64, usize)> {
    let n = rhs.len();
    let mut b = rhs.to_vec();
    project_mean(&mut b, in_f, count);
    let b_norm = dot(&b, &b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok((x, 0.0, 0));
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let max_iter = 20 * n;
    for iter in 1..=max_iter {
        apply_laplacian(faces, &p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&ap).for_each(|(ri, ai)| *ri -= alpha * ai);
        project_mean(&mut r, in_f, count);
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= CG_TOL * b_norm {
            project_mean(&mut x, in_f, count);
            // true residual of the assembled system
            let mut lx = vec![0.0; n];
            apply_laplacian(faces, &x, &mut lx);
            let res = lx.iter().zip(&b).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt() / b_norm;
            return Ok((x, res, iter));
        }
        let beta = rr_new / rr;
        p.iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + beta * *pi);
        rr = rr_new;
    }
    Err(Error::Numeric(format!(
        "cell problem CG did not reach {CG_TOL:e} in {max_iter} iterations"
    )))
}

/// Solves the `n` cell problems. The grid must place at least 8 cells across
/// every ball diameter.
pub fn solve_cell_problem(geom: &UnitCellGeometry, grid: &Grid) -> Result<CellSolution> {
    if geom.dim() != grid.dim() {
        return Err(Error::Resolution(format!(
            "geometry is {}-dimensional, grid is {}-dimensional",
            geom.dim(),
            grid.dim()
        )));
    }
    if geom.inclusion_count() > 0 && 2.0 * geom.radius() < 8.0 * grid.spacing() {
        return Err(Error::Resolution(format!(
            "ball diameter {} spans fewer than 8 cells at N = {}",
            2.0 * geom.radius(),
            grid.points()
        )));
    }
    let in_f = perforation_mask(geom, grid);
    let count = in_f.iter().filter(|&&f| f).count();
    let faces = faces(grid, &in_f);
    let h = grid.spacing();
    let mut fields = Vec::with_capacity(grid.dim());
    let mut residuals = Vec::with_capacity(grid.dim());
    let mut iterations = Vec::with_capacity(grid.dim());
    for k in 0..grid.dim() {
        let mut rhs = vec![0.0; grid.len()];
        for &(p, q, axis) in &faces {
            if axis == k {
                rhs[q] += h;
                rhs[p] -= h;
            }
        }
        let (v, res, iters) = solve_mean_zero(&faces, &rhs, &in_f, count)?;
        fields.push(v);
        residuals.push(res);
        iterations.push(iters);
    }
    Ok(CellSolution {
        grid: *grid,
        in_f,
        fields,
        residuals,
        iterations,
    })
}

/// `a_hat^{kl} = (1/|F|) sum_faces h^n g_k g_l` with the face gradients
/// `g_k = delta_dk - (v_k(q) - v_k(p)) / h`.
pub fn compute_a_hat(sol: &CellSolution) -> EffectiveMatrix {
    let grid = &sol.grid;
    let n = grid.dim();
    let h = grid.spacing();
    let faces = faces(grid, &sol.in_f);
    let mut a_hat = vec![vec![0.0; n]; n];
    for &(p, q, axis) in &faces {
        let g: Vec<f64> = (0..n)
            .map(|k| {
                let jump = (sol.fields[k][q] - sol.fields[k][p]) / h;
                if k == axis {
                    1.0 - jump
                } else {
                    -jump
                }
            })
            .collect();
        for k in 0..n {
            for l in 0..n {
                a_hat[k][l] += g[k] * g[l];
            }
        }
    }
    // h^n per face over |F| = (#F nodes) h^n
    let count = sol.in_f.iter().filter(|&&f| f).count() as f64;
    for row in &mut a_hat {
        row.iter_mut().for_each(|v| *v /= count);
    }
    EffectiveMatrix { a_hat }
}
