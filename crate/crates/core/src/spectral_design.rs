//! Closed-form design algebra.
//!
//! Given target gaps `(alpha_j, beta_j)` the medium constants `a_j`, `b_j` are
//! chosen so that the limit operator has lower gap edges `sigma_j = alpha_j`
//! and upper gap edges `mu_j = beta_j`, where `mu_j` are the roots of the
//! secular function
//!
//! ```text
//! F(lambda) = 1 + sum_j rho_j / (sigma_j - lambda)
//! ```
//!
//! with `sigma_j = n a_j / (r b_j)` and `rho_j = a_j |dB_j| / |F|`.

use nalgebra::{DMatrix, DVector};

use crate::error::{precondition, Error, Result};
use crate::geometry::UnitCellGeometry;

/// Relative tolerance used to decide that two `sigma` values coincide.
pub const SIGMA_DEGENERACY_TOL: f64 = 1e-12;

/// Target gaps inside the window `[0, L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GapSpec {
    intervals: Vec<(f64, f64)>,
    window: f64,
}

impl GapSpec {
    /// Validates `0 < alpha_1`, `alpha_j < beta_j < alpha_{j+1}` and `beta_m < L`.
    pub fn new(intervals: Vec<(f64, f64)>, window: f64) -> Result<Self> {
        if intervals.is_empty() {
            return Err(precondition("intervals", "at least one target gap is required"));
        }
        for (j, &(alpha, beta)) in intervals.iter().enumerate() {
            if !alpha.is_finite() || !beta.is_finite() {
                return Err(precondition(format!("intervals[{j}]"), "endpoints must be finite"));
            }
            if j == 0 && !(alpha > 0.0) {
                return Err(precondition(
                    "intervals[0].alpha",
                    format!("alpha_1 = {alpha} must be positive"),
                ));
            }
            if !(alpha < beta) {
                return Err(precondition(
                    format!("intervals[{j}].beta"),
                    format!("beta = {beta} must exceed alpha = {alpha}"),
                ));
            }
            if let Some(&(next_alpha, _)) = intervals.get(j + 1) {
                if !(beta < next_alpha) {
                    return Err(precondition(
                        format!("intervals[{j}].beta"),
                        format!("beta = {beta} must be below the next alpha = {next_alpha}"),
                    ));
                }
            }
        }
        let last_beta = intervals[intervals.len() - 1].1;
        if !(last_beta < window) || !window.is_finite() {
            return Err(precondition(
                "L",
                format!("window L = {window} must exceed the last beta = {last_beta}"),
            ));
        }
        Ok(Self { intervals, window })
    }

    /// Window without target gaps, for verifying media that should have none.
    pub fn without_targets(window: f64) -> Result<Self> {
        if !(window > 0.0) || !window.is_finite() {
            return Err(precondition("L", format!("window L = {window} must be positive")));
        }
        Ok(Self {
            intervals: Vec::new(),
            window,
        })
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.intervals.iter().map(|iv| iv.0).collect()
    }

    pub fn betas(&self) -> Vec<f64> {
        self.intervals.iter().map(|iv| iv.1).collect()
    }
}

/// Designed constants `a_j`, `b_j` and the shell exponent `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct MediumCoefficients {
    a: Vec<f64>,
    b: Vec<f64>,
    gamma: f64,
}

impl MediumCoefficients {
    pub fn new(a: Vec<f64>, b: Vec<f64>, gamma: f64) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Coefficients(format!(
                "{} values of a but {} values of b",
                a.len(),
                b.len()
            )));
        }
        if let Some(j) = a.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Coefficients(format!("a[{j}] = {} is not positive", a[j])));
        }
        if let Some(j) = b.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Coefficients(format!("b[{j}] = {} is not positive", b[j])));
        }
        if !(gamma > 3.0) || !gamma.is_finite() {
            return Err(Error::Coefficients(format!("gamma = {gamma} must exceed 3")));
        }
        Ok(Self { a, b, gamma })
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

/// Lower edges `sigma`, weights `rho` and upper edges `mu` of the limit gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitSpectrum {
    sigma: Vec<f64>,
    rho: Vec<f64>,
    mu: Vec<f64>,
}

impl LimitSpectrum {
    /// Solves for `mu` given ascending distinct `sigma` and positive `rho`.
    pub fn from_sigma_rho(sigma: Vec<f64>, rho: Vec<f64>) -> Result<Self> {
        let mu = find_mu(&sigma, &rho)?;
        Ok(Self { sigma, rho, mu })
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    /// Gap intervals `(sigma_j, mu_j)`.
    pub fn gaps(&self) -> Vec<(f64, f64)> {
        self.sigma.iter().copied().zip(self.mu.iter().copied()).collect()
    }

    pub(crate) fn pole_tolerance(&self) -> f64 {
        pole_tolerance(&self.sigma)
    }
}

fn pole_tolerance(sigma: &[f64]) -> f64 {
    match (sigma.first(), sigma.last()) {
        (Some(first), Some(last)) => 1e-10 * (last - first + 1.0),
        _ => 1e-10,
    }
}

/// `rho_j = (beta_j - alpha_j) prod_{i != j} (beta_i - alpha_j) / (alpha_i - alpha_j)`.
///
/// Positive for every valid [`GapSpec`].
pub fn product_formula_rho(spec: &GapSpec) -> Vec<f64> {
    let iv = spec.intervals();
    (0..iv.len())
        .map(|j| {
            let (alpha_j, beta_j) = iv[j];
            iv.iter()
                .enumerate()
                .filter(|&(i, _)| i != j)
                .fold(beta_j - alpha_j, |acc, (_, &(alpha_i, beta_i))| {
                    acc * ((beta_i - alpha_j) / (alpha_i - alpha_j))
                })
        })
        .collect()
}

/// Coefficients that place the limit gaps exactly on the targets.
pub fn design_coefficients(
    spec: &GapSpec,
    geom: &UnitCellGeometry,
    gamma: f64,
) -> Result<MediumCoefficients> {
    if geom.inclusion_count() != spec.len() {
        return Err(Error::Geometry(format!(
            "{} target gaps need {} inclusions, geometry has {}",
            spec.len(),
            spec.len(),
            geom.inclusion_count()
        )));
    }
    let free = geom.free_volume();
    let area = geom.sphere_area();
    let n = geom.dim() as f64;
    let r = geom.radius();
    let rho = product_formula_rho(spec);
    let a = rho.iter().map(|p| free / area * p).collect();
    let b = rho
        .iter()
        .zip(spec.alphas())
        .map(|(p, alpha)| n * free / (r * area) * p / alpha)
        .collect();
    MediumCoefficients::new(a, b, gamma)
}

/// `sigma_j = n a_j / (r b_j)` and `rho_j = a_j |dB_j| / |F|`, sorted by `sigma`.
pub fn compute_sigma_rho(
    coeffs: &MediumCoefficients,
    geom: &UnitCellGeometry,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if coeffs.len() != geom.inclusion_count() {
        return Err(Error::Coefficients(format!(
            "{} coefficient pairs for {} inclusions",
            coeffs.len(),
            geom.inclusion_count()
        )));
    }
    let n = geom.dim() as f64;
    let r = geom.radius();
    let weight = geom.sphere_area() / geom.free_volume();
    let mut pairs: Vec<(usize, f64, f64)> = coeffs
        .a()
        .iter()
        .zip(coeffs.b())
        .enumerate()
        .map(|(j, (&a, &b))| (j, n * a / (r * b), a * weight))
        .collect();
    pairs.sort_by(|x, y| x.1.total_cmp(&y.1));
    for w in pairs.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi.1 - lo.1 <= SIGMA_DEGENERACY_TOL * hi.1.abs().max(lo.1.abs()) {
            return Err(Error::Degenerate {
                i: lo.0,
                j: hi.0,
                value_i: lo.1,
                value_j: hi.1,
            });
        }
    }
    Ok(pairs.into_iter().map(|(_, s, p)| (s, p)).unzip())
}

/// `F(lambda) = 1 + sum_j rho_j / (sigma_j - lambda)`.
pub fn eval_secular(lambda: f64, ls: &LimitSpectrum) -> Result<f64> {
    let tol = ls.pole_tolerance();
    if let Some((index, &sigma)) = ls
        .sigma
        .iter()
        .enumerate()
        .find(|(_, &s)| (lambda - s).abs() < tol)
    {
        return Err(Error::Pole {
            lambda,
            index,
            sigma,
        });
    }
    Ok(secular_raw(lambda, &ls.sigma, &ls.rho))
}

fn secular_raw(lambda: f64, sigma: &[f64], rho: &[f64]) -> f64 {
    1.0 + sigma
        .iter()
        .zip(rho)
        .map(|(s, p)| p / (s - lambda))
        .sum::<f64>()
}

fn secular_derivative(lambda: f64, sigma: &[f64], rho: &[f64]) -> f64 {
    sigma
        .iter()
        .zip(rho)
        .map(|(s, p)| p / ((s - lambda) * (s - lambda)))
        .sum()
}

fn check_sigma_rho(sigma: &[f64], rho: &[f64]) -> Result<()> {
    if sigma.is_empty() {
        return Err(precondition("sigma", "at least one pole is required"));
    }
    if sigma.len() != rho.len() {
        return Err(precondition(
            "rho",
            format!("{} weights for {} poles", rho.len(), sigma.len()),
        ));
    }
    for (j, w) in sigma.windows(2).enumerate() {
        if !(w[0] < w[1]) {
            return Err(Error::Degenerate {
                i: j,
                j: j + 1,
                value_i: w[0],
                value_j: w[1],
            });
        }
    }
    if let Some(j) = rho.iter().position(|&p| !(p > 0.0 && p.is_finite())) {
        return Err(precondition(format!("rho[{j}]"), "weights must be positive"));
    }
    Ok(())
}

/// Bisection on a bracket with `f(lo) < 0 < f(hi)`, run down to adjacent floats.
fn bisect_increasing(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v == 0.0 {
            return mid;
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if f(lo).abs() <= f(hi).abs() {
        lo
    } else {
        hi
    }
}

/// Newton steps that are kept only while they stay in the bracket and shrink `|f|`.
fn newton_polish(
    mut x: f64,
    lo: f64,
    hi: f64,
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
) -> f64 {
    let mut fx = f(x);
    for _ in 0..3 {
        let d = df(x);
        if fx == 0.0 || d == 0.0 || !d.is_finite() {
            break;
        }
        let next = x - fx / d;
        if !(next > lo && next < hi) {
            break;
        }
        let f_next = f(next);
        if f_next.abs() >= fx.abs() {
            break;
        }
        x = next;
        fx = f_next;
    }
    x
}

/// The `m` roots of `F`, one per pole interval, interlacing with `sigma`.
pub fn find_mu(sigma: &[f64], rho: &[f64]) -> Result<Vec<f64>> {
    check_sigma_rho(sigma, rho)?;
    let m = sigma.len();
    if m == 1 {
        return Ok(vec![sigma[0] + rho[0]]);
    }
    let rho_sum: f64 = rho.iter().sum();
    let scale = sigma[m - 1].abs().max(1.0);
    let f = |x: f64| secular_raw(x, sigma, rho);
    let df = |x: f64| secular_derivative(x, sigma, rho);
    let mut mu = Vec::with_capacity(m);
    for j in 0..m {
        let lo_pole = sigma[j];
        let hi_end = if j + 1 < m { sigma[j + 1] } else { sigma[m - 1] + rho_sum };
        let delta_p = 1e-12 * scale;
        let lo = (lo_pole + delta_p).min(0.5 * (lo_pole + hi_end));
        let hi = if j + 1 < m {
            (hi_end - delta_p).max(0.5 * (lo_pole + hi_end))
        } else {
            hi_end
        };
        if j + 1 == m && f(hi) == 0.0 {
            mu.push(hi);
            continue;
        }
        let root = bisect_increasing(lo, hi, f);
        mu.push(newton_polish(root, lo_pole, hi_end, f, df));
    }
    Ok(mu)
}

/// Dense solve of the Cauchy system `sum_j rho_j / (beta_k - alpha_j) = 1`.
///
/// Independent of [`product_formula_rho`]; both must agree.
pub fn solve_gap_system_oracle(spec: &GapSpec) -> Result<Vec<f64>> {
    let alpha = spec.alphas();
    let beta = spec.betas();
    let m = alpha.len();
    let matrix = DMatrix::from_fn(m, m, |k, j| 1.0 / (beta[k] - alpha[j]));
    let rhs = DVector::from_element(m, 1.0);
    let lu = matrix.clone().lu();
    let mut x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Numeric("singular Cauchy system".into()))?;
    // one step of iterative refinement
    let residual = &rhs - &matrix * &x;
    if let Some(dx) = lu.solve(&residual) {
        x += dx;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite Cauchy solution".into()));
    }
    Ok(x.iter().copied().collect())
}

/// Closed bands `[0, sigma_1], [mu_1, sigma_2], ..., [mu_m, L]` of the limit spectrum.
pub fn limit_spectrum(ls: &LimitSpectrum, window: f64) -> Result<Vec<(f64, f64)>> {
    if ls.is_empty() {
        return Err(precondition("sigma", "at least one gap is required"));
    }
    let mu_max = ls.mu[ls.len() - 1];
    if !(window > mu_max) {
        return Err(Error::Window { window, mu_max });
    }
    let mut bands = Vec::with_capacity(ls.len() + 1);
    let mut start = 0.0;
    for (&s, &u) in ls.sigma.iter().zip(&ls.mu) {
        bands.push((start, s));
        start = u;
    }
    bands.push((start, window));
    Ok(bands)
}

/// The `m + 1` roots of `lambda F(lambda) = s` on `[0, inf)`, ascending.
pub fn limit_dispersion(s: f64, ls: &LimitSpectrum) -> Result<Vec<f64>> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(precondition("s", format!("s = {s} must be nonnegative")));
    }
    let sigma = &ls.sigma;
    let rho = &ls.rho;
    let m = sigma.len();
    let g = |x: f64| x * secular_raw(x, sigma, rho) - s;
    let dg = |x: f64| secular_raw(x, sigma, rho) + x * secular_derivative(x, sigma, rho);
    let scale = sigma.last().map_or(1.0, |v| v.abs().max(1.0));
    let delta_p = 1e-12 * scale;
    let rho_sum: f64 = rho.iter().sum();

    let mut roots = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let (lo_end, hi_end) = match j {
            0 => (0.0, sigma.first().copied().unwrap_or(f64::INFINITY)),
            _ if j < m => (sigma[j - 1], sigma[j]),
            _ => (sigma[m - 1], sigma[m - 1] + rho_sum + s + 1.0),
        };
        if j == 0 && s == 0.0 {
            roots.push(0.0);
            continue;
        }
        if j > 0 && s == 0.0 {
            roots.push(ls.mu[j - 1]);
            continue;
        }
        let lo = if j == 0 {
            0.0
        } else {
            (lo_end + delta_p).min(0.5 * (lo_end + hi_end))
        };
        let hi = if j < m {
            (hi_end - delta_p).max(0.5 * (lo_end + hi_end))
        } else {
            hi_end
        };
        let root = bisect_increasing(lo, hi, g);
        roots.push(newton_polish(root, lo_end, hi_end, g, dg));
    }
    Ok(roots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn two_ball_geom() -> UnitCellGeometry {
        UnitCellGeometry::new(2, 0.15, vec![vec![0.25, 0.25], vec![0.75, 0.75]]).unwrap()
    }

    fn centered() -> UnitCellGeometry {
        UnitCellGeometry::new(2, 0.2, vec![vec![0.5, 0.5]]).unwrap()
    }

    #[test]
    fn single_gap_design() {
        let spec = GapSpec::new(vec![(2.0, 5.0)], 10.0).unwrap();
        let g = centered();
        let c = design_coefficients(&spec, &g, 3.2).unwrap();
        let ratio = g.free_volume() / g.sphere_area();
        assert_relative_eq!(c.a()[0], 3.0 * ratio, max_relative = 1e-15);
        assert_relative_eq!(c.b()[0], 2.0 * ratio / 0.2 * 1.5, max_relative = 1e-15);
        let (sigma, rho) = compute_sigma_rho(&c, &g).unwrap();
        assert_relative_eq!(sigma[0], 2.0, max_relative = 1e-14);
        assert_relative_eq!(rho[0], 3.0, max_relative = 1e-14);
    }

    #[test]
    fn two_gap_design_matches_hand_values() {
        let spec = GapSpec::new(vec![(1.0, 2.0), (3.0, 4.0)], 6.0).unwrap();
        let g = two_ball_geom();
        let c = design_coefficients(&spec, &g, 3.2).unwrap();
        assert_relative_eq!(c.a()[0], 1.36646, epsilon = 2e-4);
        let sigma_1 = 2.0 * c.a()[0] / (0.15 * c.b()[0]);
        assert_relative_eq!(sigma_1, 1.0, max_relative = 1e-14);
        let (sigma, rho) = compute_sigma_rho(&c, &g).unwrap();
        assert_relative_eq!(sigma[1], 3.0, max_relative = 1e-14);
        assert_relative_eq!(rho[0], 1.5, max_relative = 1e-14);
        assert_relative_eq!(rho[1], 0.5, max_relative = 1e-14);
    }

    #[test]
    fn overlapping_targets_are_rejected() {
        let err = GapSpec::new(vec![(1.0, 4.0), (3.0, 5.0)], 6.0).unwrap_err();
        assert!(matches!(err, Error::Precondition { ref field, .. } if field == "intervals[0].beta"));
        assert!(GapSpec::new(vec![(1.0, 1.0)], 6.0).is_err());
        assert!(GapSpec::new(vec![(0.0, 1.0)], 6.0).is_err());
        assert!(GapSpec::new(vec![(1.0, 2.0)], 2.0).is_err());
        assert!(GapSpec::new(vec![], 2.0).is_err());
    }

    #[test]
    fn sigma_rho_direct_arithmetic() {
        let g = UnitCellGeometry::new(2, 0.4, vec![vec![0.5, 0.5]]).unwrap();
        let c = MediumCoefficients::new(vec![1.0], vec![5.0], 3.2).unwrap();
        let (sigma, _) = compute_sigma_rho(&c, &g).unwrap();
        assert_relative_eq!(sigma[0], 1.0, max_relative = 1e-15);
        let g = UnitCellGeometry::new(2, 0.1, vec![vec![0.3, 0.5], vec![0.7, 0.5]]).unwrap();
        // example: n = 2, a = 1, r = 0.5, b = 4 gives sigma = 1; same ratio a / (r b)
        let c = MediumCoefficients::new(vec![0.2, 0.4], vec![4.0, 4.0], 3.2).unwrap();
        let (sigma, _) = compute_sigma_rho(&c, &g).unwrap();
        assert_relative_eq!(sigma[0], 1.0, max_relative = 1e-15);
        assert_relative_eq!(sigma[1], 2.0, max_relative = 1e-15);
    }

    #[test]
    fn unsorted_sigma_is_sorted_with_rho() {
        let g = two_ball_geom();
        let c = MediumCoefficients::new(vec![3.0, 1.0], vec![1.0, 1.0], 3.2).unwrap();
        let (sigma, rho) = compute_sigma_rho(&c, &g).unwrap();
        assert!(sigma[0] < sigma[1]);
        assert!(rho[0] < rho[1]);
        assert_relative_eq!(rho[1] / rho[0], 3.0, max_relative = 1e-14);
    }

    #[test]
    fn degenerate_sigma_is_rejected() {
        let g = two_ball_geom();
        let c = MediumCoefficients::new(vec![1.0, 2.0], vec![1.0, 2.0], 3.2).unwrap();
        assert!(matches!(compute_sigma_rho(&c, &g), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn coefficient_validation() {
        assert!(MediumCoefficients::new(vec![1.0], vec![1.0], 3.0).is_err());
        assert!(MediumCoefficients::new(vec![-1.0], vec![1.0], 3.2).is_err());
        assert!(MediumCoefficients::new(vec![1.0], vec![0.0], 3.2).is_err());
        assert!(MediumCoefficients::new(vec![1.0], vec![], 3.2).is_err());
    }

    fn fixed_case() -> LimitSpectrum {
        LimitSpectrum::from_sigma_rho(vec![1.0, 3.0], vec![1.5, 0.5]).unwrap()
    }

    #[test]
    fn secular_values() {
        let ls = fixed_case();
        assert_eq!(eval_secular(2.0, &ls).unwrap(), 0.0);
        assert!(eval_secular(0.0, &ls).unwrap() > 1.0);
        assert!(matches!(eval_secular(1.0, &ls), Err(Error::Pole { index: 0, .. })));
        assert!(matches!(eval_secular(3.0 + 1e-11, &ls), Err(Error::Pole { index: 1, .. })));
    }

    #[test]
    fn fixed_case_roots() {
        let ls = fixed_case();
        assert_relative_eq!(ls.mu()[0], 2.0, max_relative = 1e-14);
        assert_relative_eq!(ls.mu()[1], 4.0, max_relative = 1e-14);
        for &mu in ls.mu() {
            assert!(eval_secular(mu, &ls).unwrap().abs() <= 1e-12);
        }
    }

    #[test]
    fn single_root_closed_form() {
        let mu = find_mu(&[2.5], &[0.7]).unwrap();
        assert_eq!(mu, vec![2.5 + 0.7]);
    }

    #[test]
    fn find_mu_rejects_bad_input() {
        assert!(find_mu(&[2.0, 1.0], &[1.0, 1.0]).is_err());
        assert!(find_mu(&[1.0, 2.0], &[1.0, -1.0]).is_err());
        assert!(find_mu(&[], &[]).is_err());
    }

    #[test]
    fn cauchy_oracle_small_cases() {
        let spec = GapSpec::new(vec![(2.0, 5.0)], 10.0).unwrap();
        assert_relative_eq!(solve_gap_system_oracle(&spec).unwrap()[0], 3.0, max_relative = 1e-15);
        let spec = GapSpec::new(vec![(1.0, 2.0), (3.0, 4.0)], 6.0).unwrap();
        let rho = solve_gap_system_oracle(&spec).unwrap();
        assert_relative_eq!(rho[0], 1.5, max_relative = 1e-14);
        assert_relative_eq!(rho[1], 0.5, max_relative = 1e-14);
        assert_eq!(product_formula_rho(&spec), vec![1.5, 0.5]);
    }

    #[test]
    fn limit_bands() {
        let ls = LimitSpectrum::from_sigma_rho(vec![2.0], vec![3.0]).unwrap();
        assert_eq!(limit_spectrum(&ls, 10.0).unwrap(), vec![(0.0, 2.0), (5.0, 10.0)]);
        let ls = fixed_case();
        let bands = limit_spectrum(&ls, 6.0).unwrap();
        assert_eq!(bands.len(), 3);
        assert_eq!(bands[0], (0.0, 1.0));
        assert_relative_eq!(bands[1].0, 2.0, max_relative = 1e-14);
        assert_eq!(bands[1].1, 3.0);
        assert_relative_eq!(bands[2].0, 4.0, max_relative = 1e-14);
        assert!(matches!(limit_spectrum(&ls, 4.0), Err(Error::Window { .. })));
        assert!(LimitSpectrum::from_sigma_rho(vec![], vec![]).is_err());
    }

    #[test]
    fn dispersion_at_zero_and_quadratic_oracle() {
        let ls = fixed_case();
        let roots = limit_dispersion(0.0, &ls).unwrap();
        assert_eq!(roots[0], 0.0);
        assert_eq!(&roots[1..], ls.mu());

        let ls = LimitSpectrum::from_sigma_rho(vec![2.0], vec![3.0]).unwrap();
        let roots = limit_dispersion(2.0, &ls).unwrap();
        // lambda^2 - (sigma + rho + s) lambda + s sigma = lambda^2 - 7 lambda + 4
        let disc = (49.0f64 - 16.0).sqrt();
        assert_relative_eq!(roots[0], (7.0 - disc) / 2.0, max_relative = 1e-13);
        assert_relative_eq!(roots[1], (7.0 + disc) / 2.0, max_relative = 1e-13);
        assert_relative_eq!(roots[0], 0.627, epsilon = 1e-3);
        assert_relative_eq!(roots[1], 6.373, epsilon = 1e-3);
        assert!(limit_dispersion(-1.0, &ls).is_err());
    }

    #[test]
    fn dispersion_large_s_trend() {
        let ls = fixed_case();
        let mut previous = limit_dispersion(0.0, &ls).unwrap();
        for k in 1..30 {
            let s = 10f64.powf(k as f64 / 4.0);
            let roots = limit_dispersion(s, &ls).unwrap();
            for (r, p) in roots.iter().zip(&previous) {
                assert!(r > p);
            }
            assert!(roots[0] < 1.0 && roots[1] < 3.0);
            previous = roots;
        }
        assert!(previous[0] > 1.0 - 1e-3);
        assert!(previous[1] > 3.0 - 1e-3);
        assert!(previous[2] > 1e6);
    }

    fn valid_spec(m: usize) -> impl Strategy<Value = GapSpec> {
        prop::collection::vec(0.2f64..2.0, 2 * m + 1).prop_map(|steps| {
            let mut acc = 0.0;
            let pts: Vec<f64> = steps
                .iter()
                .map(|s| {
                    acc += s;
                    acc
                })
                .collect();
            let intervals = (0..pts.len() / 2).map(|j| (pts[2 * j], pts[2 * j + 1])).collect();
            GapSpec::new(intervals, pts[pts.len() - 1]).unwrap()
        })
    }

    proptest! {
        #[test]
        fn prop_round_trip(spec in (1usize..=6).prop_flat_map(valid_spec), r in 0.03f64..0.15) {
            let m = spec.len();
            let centers = (0..m).map(|j| vec![0.25 + 0.5 * (j % 2) as f64, (j / 2) as f64 * 0.33 + 0.17 ]).collect();
            let geom = UnitCellGeometry::new(2, r, centers).unwrap();
            let coeffs = design_coefficients(&spec, &geom, 3.5).unwrap();
            let (sigma, rho) = compute_sigma_rho(&coeffs, &geom).unwrap();
            for (s, a) in sigma.iter().zip(spec.alphas()) {
                prop_assert!((s - a).abs() <= 1e-12 * a);
            }
            let mu = find_mu(&sigma, &rho).unwrap();
            for (u, b) in mu.iter().zip(spec.betas()) {
                prop_assert!((u - b).abs() <= 1e-10 * b);
            }
        }

        #[test]
        fn prop_interlacing(spec in (1usize..=6).prop_flat_map(valid_spec), weights in prop::collection::vec(0.01f64..10.0, 6)) {
            let sigma = spec.alphas();
            let rho: Vec<f64> = weights[..sigma.len()].to_vec();
            let mu = find_mu(&sigma, &rho).unwrap();
            let rho_sum: f64 = rho.iter().sum();
            for j in 0..sigma.len() {
                prop_assert!(sigma[j] < mu[j]);
                if j + 1 < sigma.len() {
                    prop_assert!(mu[j] < sigma[j + 1]);
                } else {
                    prop_assert!(mu[j] <= sigma[j] + rho_sum);
                }
                let gap = sigma.iter().map(|s| (s - mu[j]).abs()).fold(f64::INFINITY, f64::min);
                let bound = 1e-12 * (1.0 + rho_sum / gap);
                prop_assert!(secular_raw(mu[j], &sigma, &rho).abs() <= bound);
            }
        }

        #[test]
        fn prop_cauchy_oracle(spec in (1usize..=8).prop_flat_map(valid_spec)) {
            let prod = product_formula_rho(&spec);
            let dense = solve_gap_system_oracle(&spec).unwrap();
            for (p, d) in prod.iter().zip(&dense) {
                prop_assert!(*p > 0.0);
                prop_assert!((p - d).abs() <= 1e-10 * p.abs());
            }
        }

        #[test]
        fn prop_secular_monotone(spec in (1usize..=5).prop_flat_map(valid_spec)) {
            let ls = LimitSpectrum::from_sigma_rho(spec.alphas(), product_formula_rho(&spec)).unwrap();
            let s = ls.sigma();
            let mut ends: Vec<(f64, f64)> = s.windows(2).map(|w| (w[0], w[1])).collect();
            ends.push((s[s.len() - 1], s[s.len() - 1] + 20.0));
            for (lo, hi) in ends {
                let samples: Vec<f64> = (1..50)
                    .map(|k| lo + (hi - lo) * k as f64 / 50.0)
                    .map(|x| eval_secular(x, &ls).unwrap())
                    .collect();
                prop_assert!(samples.windows(2).all(|w| w[1] > w[0]));
            }
        }

        #[test]
        fn prop_dispersion_monotone_in_s(spec in (1usize..=4).prop_flat_map(valid_spec), s in 0.0f64..100.0) {
            let ls = LimitSpectrum::from_sigma_rho(spec.alphas(), product_formula_rho(&spec)).unwrap();
            let a = limit_dispersion(s, &ls).unwrap();
            let b = limit_dispersion(s + 1.0, &ls).unwrap();
            prop_assert_eq!(a.len(), ls.len() + 1);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(y > x);
            }
            for (j, x) in a.iter().enumerate() {
                let value = x * secular_raw(*x, ls.sigma(), ls.rho());
                prop_assert!((value - s).abs() <= 1e-8 * (1.0 + s));
                if j > 0 {
                    prop_assert!(*x > ls.sigma()[j - 1]);
                }
                if j < ls.len() {
                    prop_assert!(*x < ls.sigma()[j]);
                }
            }
        }
    }
}
