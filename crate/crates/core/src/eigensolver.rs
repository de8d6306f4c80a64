//! Smallest eigenpairs of Hermitian pencils `A u = lambda B u` with diagonal `B`.
//!
//! The pencil is reduced to the standard form `C = B^-1/2 A B^-1/2` and
//! iterated with a preconditioned block method (LOBPCG): every step performs a
//! Rayleigh-Ritz projection onto `[X, T R, P]`, where `R` is the block residual,
//! `T` the preconditioner and `P` the previous search direction.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::discretization::CellOperator;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Largest dimension accepted by [`dense_oracle`].
pub const DENSE_LIMIT: usize = 2000;

/// Relative spacing below which neighbouring eigenvalues count as one cluster.
pub const CLUSTER_TOL: f64 = 1e-8;

// Work budget (n * bandwidth^2) above which shift-invert falls back to Jacobi.
const BANDED_BUDGET: f64 = 6e9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preconditioner {
    Identity,
    /// Inverse diagonal of the scaled operator.
    Jacobi,
    /// `(A + shift B)^-1`, factored once by banded Cholesky.
    ShiftInvert { shift: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub preconditioner: Preconditioner,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 5000,
            seed: 0,
            preconditioner: Preconditioner::ShiftInvert { shift: 1.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// `||A u - lambda B u|| / ||B u||` for each returned pair.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

type Column = Vec<Complex64>;

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

fn dot(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn check_pencil(a: &CsrMatrix, b: &[f64]) -> Result<()> {
    if b.len() != a.dim() {
        return Err(Error::Numeric(format!(
            "mass has length {} for an operator of dimension {}",
            b.len(),
            a.dim()
        )));
    }
    if let Some(i) = b.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::Numeric(format!("mass entry {i} is not positive: {}", b[i])));
    }
    Ok(())
}

/// Standard-form operator `C = D A D` with `D = B^-1/2`.
struct ScaledOperator<'a> {
    a: &'a CsrMatrix,
    inv_sqrt_b: Vec<f64>,
    sqrt_b: Vec<f64>,
}

impl<'a> ScaledOperator<'a> {
    fn new(a: &'a CsrMatrix, b: &[f64]) -> Self {
        Self {
            a,
            inv_sqrt_b: b.iter().map(|v| 1.0 / v.sqrt()).collect(),
            sqrt_b: b.iter().map(|v| v.sqrt()).collect(),
        }
    }

    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn apply(&self, x: &[Complex64]) -> Column {
        let scaled: Column = x.iter().zip(&self.inv_sqrt_b).map(|(v, d)| v * d).collect();
        let mut y = vec![zero(); x.len()];
        self.a.mul_vec(&scaled, &mut y);
        y.iter_mut().zip(&self.inv_sqrt_b).for_each(|(v, d)| *v *= d);
        y
    }

    fn diagonal(&self) -> Vec<f64> {
        self.a
            .diagonal()
            .iter()
            .zip(&self.inv_sqrt_b)
            .map(|(v, d)| v.re * d * d)
            .collect()
    }

    fn norm_inf(&self) -> f64 {
        (0..self.dim())
            .map(|i| {
                self.a
                    .row(i)
                    .map(|(j, v)| v.norm() * self.inv_sqrt_b[i] * self.inv_sqrt_b[j])
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    fn to_dense(&self) -> DMatrix<Complex64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for (j, v) in self.a.row(i) {
                m[(i, j)] = v * self.inv_sqrt_b[i] * self.inv_sqrt_b[j];
            }
        }
        (&m + m.adjoint()) * Complex64::new(0.5, 0.0)
    }

    /// `||A u - lambda B u|| / ||B u||` for `u = D x` given `r = C x - lambda x`.
    fn pencil_residual(&self, r: &[Complex64], x: &[Complex64]) -> f64 {
        let num: f64 = r.iter().zip(&self.sqrt_b).map(|(v, s)| (v * s).norm_sqr()).sum();
        let den: f64 = x.iter().zip(&self.sqrt_b).map(|(v, s)| (v * s).norm_sqr()).sum();
        if den == 0.0 {
            0.0
        } else {
            (num / den).sqrt()
        }
    }
}

/// Cholesky factor of a Hermitian positive definite band matrix, stored by rows.
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    factor: Vec<Complex64>,
    position: Vec<usize>,
}

impl BandedCholesky {
    /// Factors `A + shift * diag(b)` in the node order given by `position`.
    pub fn new(a: &CsrMatrix, b: &[f64], shift: f64, position: &[usize]) -> Result<Self> {
        let n = a.dim();
        let bw = a.bandwidth_under(position);
        let width = bw + 1;
        let mut factor = vec![zero(); n * width];
        for i in 0..n {
            let pi = position[i];
            for (j, v) in a.row(i) {
                let pj = position[j];
                if pj <= pi {
                    factor[pi * width + bw - (pi - pj)] += v;
                }
            }
            factor[pi * width + bw] += Complex64::new(shift * b[i], 0.0);
        }
        for i in 0..n {
            let lo_i = i.saturating_sub(bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(bw));
                let row_i = &factor[i * width..(i + 1) * width];
                let row_j = &factor[j * width..(j + 1) * width];
                let mut s = row_i[bw - (i - j)];
                let oi = bw + lo - i;
                let oj = bw + lo - j;
                for t in 0..j - lo {
                    s -= row_i[oi + t] * row_j[oj + t].conj();
                }
                if i == j {
                    if !(s.re > 0.0) {
                        return Err(Error::Numeric(format!(
                            "shifted operator is not positive definite at row {i}"
                        )));
                    }
                    factor[i * width + bw] = Complex64::new(s.re.sqrt(), 0.0);
                } else {
                    let d = factor[j * width + bw].re;
                    factor[i * width + bw - (i - j)] = s / d;
                }
            }
        }
        Ok(Self {
            n,
            bw,
            factor,
            position: position.to_vec(),
        })
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Solves `(A + shift B) x = r`.
    pub fn solve(&self, r: &[Complex64]) -> Column {
        let (n, bw, width) = (self.n, self.bw, self.bw + 1);
        let mut y = vec![zero(); n];
        for (i, &p) in self.position.iter().enumerate() {
            y[p] = r[i];
        }
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let row = &self.factor[i * width..(i + 1) * width];
            let mut s = y[i];
            for k in lo..i {
                s -= row[bw + k - i] * y[k];
            }
            y[i] = s / row[bw].re;
        }
        for i in (0..n).rev() {
            let row = &self.factor[i * width..(i + 1) * width];
            let xi = y[i] / row[bw].re;
            y[i] = xi;
            for k in i.saturating_sub(bw)..i {
                y[k] -= row[bw + k - i].conj() * xi;
            }
        }
        self.position.iter().map(|&p| y[p]).collect()
    }
}

enum Apply {
    Identity,
    Jacobi(Vec<f64>),
    Banded { chol: BandedCholesky, sqrt_b: Vec<f64> },
}

impl Apply {
    fn build(
        op: &ScaledOperator,
        b: &[f64],
        kind: Preconditioner,
        position: Option<&[usize]>,
    ) -> Result<Self> {
        let jacobi = || {
            Apply::Jacobi(
                op.diagonal()
                    .iter()
                    .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
                    .collect(),
            )
        };
        match kind {
            Preconditioner::Identity => Ok(Apply::Identity),
            Preconditioner::Jacobi => Ok(jacobi()),
            Preconditioner::ShiftInvert { shift } => {
                if !(shift > 0.0) {
                    return Err(Error::Numeric(format!("shift must be positive, got {shift}")));
                }
                let identity: Vec<usize>;
                let position = match position {
                    Some(p) => p,
                    None => {
                        identity = (0..op.dim()).collect();
                        &identity
                    }
                };
                let bw = op.a.bandwidth_under(position) as f64;
                if op.dim() as f64 * bw * bw > BANDED_BUDGET {
                    return Ok(jacobi());
                }
                let chol = BandedCholesky::new(op.a, b, shift, position)?;
                Ok(Apply::Banded {
                    chol,
                    sqrt_b: op.sqrt_b.clone(),
                })
            }
        }
    }

    fn apply(&self, r: &[Complex64]) -> Column {
        match self {
            Apply::Identity => r.to_vec(),
            Apply::Jacobi(inv) => r.iter().zip(inv).map(|(v, d)| v * d).collect(),
            Apply::Banded { chol, sqrt_b } => {
                let rhs: Column = r.iter().zip(sqrt_b).map(|(v, s)| v * s).collect();
                let mut w = chol.solve(&rhs);
                w.iter_mut().zip(sqrt_b).for_each(|(v, s)| *v *= s);
                w
            }
        }
    }
}

/// Appends the candidates to an orthonormal basis by two-pass Gram-Schmidt,
/// dropping columns that are numerically dependent. Returns how many were kept.
fn extend_orthonormal(basis: &mut Vec<Column>, candidates: Vec<Column>) -> usize {
    let mut kept = 0;
    for mut v in candidates {
        let before = norm(&v);
        if before == 0.0 || !before.is_finite() {
            continue;
        }
        for _ in 0..2 {
            for q in basis.iter() {
                let c = dot(q, &v);
                v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let after = norm(&v);
        if after <= 1e-10 * before {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= after);
        basis.push(v);
        kept += 1;
    }
    kept
}

/// Rayleigh-Ritz on an orthonormal basis: ascending Ritz values and coefficient vectors.
fn rayleigh_ritz(basis: &[Column], images: &[Column]) -> (Vec<f64>, DMatrix<Complex64>) {
    let m = basis.len();
    let mut h = DMatrix::<Complex64>::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = dot(&basis[i], &images[j]);
            h[(i, j)] = v;
            h[(j, i)] = v.conj();
        }
        h[(i, i)] = Complex64::new(h[(i, i)].re, 0.0);
    }
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m, m, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

fn combine(cols: &[Column], coeffs: &DMatrix<Complex64>, rows: std::ops::Range<usize>, col: usize) -> Column {
    let n = cols[0].len();
    let mut out = vec![zero(); n];
    for (i, r) in rows.enumerate() {
        let c = coeffs[(r, col)];
        if c == zero() {
            continue;
        }
        out.iter_mut().zip(&cols[i]).for_each(|(o, v)| *o += c * v);
    }
    out
}

/// Number of leading pairs that must converge: `k`, extended over a cluster
/// straddling position `k`.
fn required_count(values: &[f64], k: usize) -> usize {
    let mut need = k;
    while need < values.len() {
        let (x, y) = (values[need - 1], values[need]);
        if (y - x).abs() <= CLUSTER_TOL * x.abs().max(y.abs()).max(1.0) {
            need += 1;
        } else {
            break;
        }
    }
    need
}

/// The `k` smallest eigenvalues of the pencil with default options.
pub fn smallest_k(a: &CsrMatrix, b: &[f64], k: usize) -> Result<EigenResult> {
    smallest_k_with(a, b, k, &EigenOptions::default())
}

/// Solves an assembled cell operator, using its band-reducing node order.
pub fn solve_operator(op: &CellOperator, k: usize, opts: &EigenOptions) -> Result<EigenResult> {
    lobpcg(&op.stiffness, &op.mass, k, opts, Some(&op.ordering))
}

pub fn smallest_k_with(a: &CsrMatrix, b: &[f64], k: usize, opts: &EigenOptions) -> Result<EigenResult> {
    lobpcg(a, b, k, opts, None)
}

fn lobpcg(
    a: &CsrMatrix,
    b: &[f64],
    k: usize,
    opts: &EigenOptions,
    position: Option<&[usize]>,
) -> Result<EigenResult> {
    check_pencil(a, b)?;
    let n = a.dim();
    if k == 0 || k > n {
        return Err(Error::Numeric(format!("cannot compute {k} eigenvalues of a {n}x{n} pencil")));
    }
    let op = ScaledOperator::new(a, b);
    let block = (k + 5).min(2 * k).min(n);

    if 3 * block >= n {
        // the search space would cover everything: solve densely
        let dense = op.to_dense();
        let eig = SymmetricEigen::new(dense);
        let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        values.sort_by(f64::total_cmp);
        values.truncate(k);
        return Ok(EigenResult {
            residuals: vec![0.0; values.len()],
            values,
            iterations: 0,
        });
    }

    let norm_c = op.norm_inf();
    let b_ratio = b.iter().copied().fold(0.0, f64::max) / b.iter().copied().fold(f64::INFINITY, f64::min);
    let floor = 64.0 * f64::EPSILON * norm_c * b_ratio.sqrt();
    let precond = Apply::build(&op, b, opts.preconditioner, position)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let start: Vec<Column> = (0..block)
        .map(|_| {
            (0..n)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect()
        })
        .collect();
    let mut x = Vec::with_capacity(block);
    extend_orthonormal(&mut x, start);
    if x.len() < block {
        return Err(Error::Numeric("starting block is rank deficient".into()));
    }
    let cx: Vec<Column> = x.iter().map(|v| op.apply(v)).collect();
    let (mut theta, v) = rayleigh_ritz(&x, &cx);
    let mut x: Vec<Column> = (0..block).map(|j| combine(&x, &v, 0..block, j)).collect();
    let mut cx: Vec<Column> = (0..block).map(|j| combine(&cx, &v, 0..block, j)).collect();
    let mut p: Vec<Option<Column>> = vec![None; block];

    let mut residuals = vec![f64::INFINITY; block];
    for iter in 0..=opts.max_iter {
        let mut r: Vec<Column> = Vec::with_capacity(block);
        let mut active = Vec::new();
        for j in 0..block {
            let rj: Column = cx[j].iter().zip(&x[j]).map(|(c, v)| c - theta[j] * v).collect();
            residuals[j] = op.pencil_residual(&rj, &x[j]);
            let tol_j = opts.tol * theta[j].abs().max(1.0);
            if residuals[j] > tol_j && norm(&rj) > floor {
                active.push(j);
            }
            r.push(rj);
        }
        let need = required_count(&theta, k);
        if active.iter().all(|&j| j >= need) {
            return Ok(EigenResult {
                values: theta[..k].to_vec(),
                residuals: residuals[..k].to_vec(),
                iterations: iter,
            });
        }
        if iter == opts.max_iter {
            break;
        }

        let w: Vec<Column> = active.iter().map(|&j| precond.apply(&r[j])).collect();
        let dirs: Vec<Column> = active.iter().filter_map(|&j| p[j].take()).collect();
        let mut basis = Vec::with_capacity(block + 2 * active.len());
        extend_orthonormal(&mut basis, x);
        if basis.len() < block {
            return Err(Error::Numeric("Ritz block lost rank".into()));
        }
        extend_orthonormal(&mut basis, w);
        extend_orthonormal(&mut basis, dirs);
        let images: Vec<Column> = basis.iter().map(|v| op.apply(v)).collect();
        let (values, coeffs) = rayleigh_ritz(&basis, &images);
        let m = basis.len();
        x = (0..block).map(|j| combine(&basis, &coeffs, 0..m, j)).collect();
        cx = (0..block).map(|j| combine(&images, &coeffs, 0..m, j)).collect();
        p = (0..block)
            .map(|j| {
                if m > block {
                    Some(combine(&basis[block..], &coeffs, block..m, j))
                } else {
                    None
                }
            })
            .collect();
        theta = values[..block].to_vec();
    }
    let worst = residuals[..k].iter().copied().fold(0.0, f64::max);
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        worst_residual: worst,
        residuals: residuals[..k].to_vec(),
    })
}

/// Full ascending spectrum of the pencil by dense Hermitian reduction. Test oracle.
pub fn dense_oracle(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if a.dim() > DENSE_LIMIT {
        return Err(Error::TooLarge(a.dim()));
    }
    check_pencil(a, b)?;
    let dense = ScaledOperator::new(a, b).to_dense();
    let mut values: Vec<f64> = SymmetricEigen::new(dense).eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Number of eigenvalues of the symmetric tridiagonal matrix below `x` (Sturm count).
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..diag.len() {
        let e2 = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
        q = diag[i] - x - if i == 0 { 0.0 } else { e2 / q };
        if q == 0.0 {
            q = -f64::EPSILON * (diag[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// The `k` smallest eigenvalues of a symmetric tridiagonal matrix by bisection.
pub fn tridiagonal_smallest(diag: &[f64], off: &[f64], k: usize) -> Result<Vec<f64>> {
    let n = diag.len();
    if off.len() + 1 != n || k > n {
        return Err(Error::Numeric(format!(
            "tridiagonal shape mismatch: {n} diagonal, {} off-diagonal, {k} requested",
            off.len()
        )));
    }
    let radius = |i: usize| {
        (if i > 0 { off[i - 1].abs() } else { 0.0 }) + (if i + 1 < n { off[i].abs() } else { 0.0 })
    };
    let lo0 = (0..n).map(|i| diag[i] - radius(i)).fold(f64::INFINITY, f64::min);
    let hi0 = (0..n).map(|i| diag[i] + radius(i)).fold(f64::NEG_INFINITY, f64::max);
    let mut values = Vec::with_capacity(k);
    for idx in 0..k {
        let (mut lo, mut hi) = (lo0, hi0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if sturm_count(diag, off, mid) > idx {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        values.push(0.5 * (lo + hi));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(v: f64) -> Complex64 {
        Complex64::new(v, 0.0)
    }

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, c(2.0)));
            if i + 1 < n {
                t.push((i, i + 1, c(-1.0)));
                t.push((i + 1, i, c(-1.0)));
            }
        }
        CsrMatrix::from_triplets(n, &t)
    }

    #[test]
    fn two_by_two_oracle() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, c(2.0)), (0, 1, c(1.0)), (1, 0, c(1.0)), (1, 1, c(2.0))]);
        let v = dense_oracle(&a, &[1.0, 1.0]).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-14 && (v[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn zero_operator() {
        let a = CsrMatrix::from_triplets(300, &[]);
        let b = vec![1.0; 300];
        assert!(dense_oracle(&a, &b).unwrap().iter().all(|&v| v == 0.0));
        let r = smallest_k(&a, &b, 4).unwrap();
        assert_eq!(r.values, vec![0.0; 4]);
    }

    #[test]
    fn oracle_refuses_large() {
        let a = CsrMatrix::from_triplets(DENSE_LIMIT + 1, &[]);
        assert!(matches!(
            dense_oracle(&a, &vec![1.0; DENSE_LIMIT + 1]),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn laplacian_matches_closed_form_and_oracle() {
        for n in [16, 200] {
            let a = laplacian_1d(n);
            let b = vec![1.0; n];
            let dense = dense_oracle(&a, &b).unwrap();
            for pre in [Preconditioner::Jacobi, Preconditioner::ShiftInvert { shift: 1.0 }] {
                let opts = EigenOptions { preconditioner: pre, ..Default::default() };
                let r = smallest_k_with(&a, &b, 3, &opts).unwrap();
                for (j, v) in r.values.iter().enumerate() {
                    let exact = 4.0 * (PI * (j + 1) as f64 / (2.0 * (n + 1) as f64)).sin().powi(2);
                    assert!((v - dense[j]).abs() <= 1e-10, "{v} vs {}", dense[j]);
                    assert!((v - exact).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn mass_scaling() {
        let a = laplacian_1d(120);
        let r1 = smallest_k(&a, &vec![1.0; 120], 4).unwrap();
        let r2 = smallest_k(&a, &vec![2.5; 120], 4).unwrap();
        for (x, y) in r1.values.iter().zip(&r2.values) {
            assert!((x / 2.5 - y).abs() <= 1e-10 * x.max(1.0));
        }
    }

    fn random_psd(n: usize, seed: u64) -> (CsrMatrix, Vec<f64>) {
        // sum of rank-one Hermitian edges plus a diagonal: Hermitian PSD by construction
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for _ in 0..4 * n {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i == j {
                continue;
            }
            let w = rng.random_range(0.1..2.0);
            let phase = Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
            t.push((i, i, c(w)));
            t.push((j, j, c(w)));
            t.push((i, j, -w * phase));
            t.push((j, i, -w * phase.conj()));
        }
        for i in 0..n {
            t.push((i, i, c(rng.random_range(0.0..0.5))));
        }
        let b = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
        (CsrMatrix::from_triplets(n, &t), b)
    }

    #[test]
    fn random_sparse_hermitian_agrees_with_oracle() {
        let (a, b) = random_psd(200, 11);
        assert_eq!(a.hermitian_defect(), 0.0);
        let dense = dense_oracle(&a, &b).unwrap();
        for pre in [Preconditioner::Jacobi, Preconditioner::ShiftInvert { shift: 1.0 }] {
            let opts = EigenOptions { preconditioner: pre, ..Default::default() };
            let r = smallest_k_with(&a, &b, 6, &opts).unwrap();
            for (j, v) in r.values.iter().enumerate() {
                assert!((v - dense[j]).abs() <= 1e-9 * dense[j].abs().max(1.0), "{v} vs {}", dense[j]);
                assert!(r.residuals[j] <= 1e-8 * v.abs().max(1.0) || r.residuals[j] < 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let (a, b) = random_psd(150, 3);
        let opts = EigenOptions { seed: 42, ..Default::default() };
        let r1 = smallest_k_with(&a, &b, 5, &opts).unwrap();
        let r2 = smallest_k_with(&a, &b, 5, &opts).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn banded_cholesky_solves() {
        let (a, b) = random_psd(60, 5);
        let pos: Vec<usize> = (0..60).rev().collect();
        let chol = BandedCholesky::new(&a, &b, 0.7, &pos).unwrap();
        let rhs: Vec<Complex64> = (0..60).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let x = chol.solve(&rhs);
        let mut ax = vec![zero(); 60];
        a.mul_vec(&x, &mut ax);
        for i in 0..60 {
            assert!((ax[i] + 0.7 * b[i] * x[i] - rhs[i]).norm() < 1e-9);
        }
    }

    #[test]
    fn tridiagonal_bisection() {
        let n = 50;
        let v = tridiagonal_smallest(&vec![2.0; n], &vec![-1.0; n - 1], 5).unwrap();
        for (j, x) in v.iter().enumerate() {
            let exact = 4.0 * (PI * (j + 1) as f64 / (2.0 * (n + 1) as f64)).sin().powi(2);
            assert!((x - exact).abs() < 1e-13);
        }
    }
}
