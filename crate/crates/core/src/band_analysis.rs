//! Brillouin-torus sweeps, band intervals, gap extraction and epsilon studies.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::discretization::{assemble_bloch, assemble_dirichlet, assemble_neumann, Grid, ResolutionMode};
use crate::eigensolver::{solve_operator, EigenOptions};
use crate::error::{Error, Result};
use crate::geometry::{PeriodicMedium, UnitCellGeometry};
use crate::spectral_design::{design_coefficients, GapSpec};

/// Sampled band structure on the tensor grid `phi_d = 2 pi q_d / M`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandStructure {
    pub samples: usize,
    /// Multi-index `q` of every torus point, axis 0 fastest.
    pub theta_indices: Vec<Vec<usize>>,
    /// `sheets[t][k]`: the k-th eigenvalue at torus point `t`, ascending in `k`.
    pub sheets: Vec<Vec<f64>>,
    /// `[min_theta lambda_k, max_theta lambda_k]` for every band.
    pub band_intervals: Vec<(f64, f64)>,
    /// Largest eigensolver residual over the sweep.
    pub max_residual: f64,
    pub iterations: usize,
}

impl BandStructure {
    pub fn bands(&self) -> usize {
        self.band_intervals.len()
    }

    pub fn phases(&self, t: usize) -> Vec<f64> {
        phases(&self.theta_indices[t], self.samples)
    }

    fn from_sheets(samples: usize, theta_indices: Vec<Vec<usize>>, sheets: Vec<Vec<f64>>, max_residual: f64, iterations: usize) -> Self {
        let bands = sheets.first().map_or(0, |s| s.len());
        let band_intervals = (0..bands)
            .map(|k| {
                sheets.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                    (lo.min(s[k]), hi.max(s[k]))
                })
            })
            .collect();
        Self {
            samples,
            theta_indices,
            sheets,
            band_intervals,
            max_residual,
            iterations,
        }
    }
}

fn phases(q: &[usize], samples: usize) -> Vec<f64> {
    q.iter().map(|&k| 2.0 * PI * k as f64 / samples as f64).collect()
}

fn torus_points(dim: usize, samples: usize) -> Vec<Vec<usize>> {
    let total = samples.pow(dim as u32);
    (0..total)
        .map(|mut t| {
            (0..dim)
                .map(|_| {
                    let q = t % samples;
                    t /= samples;
                    q
                })
                .collect()
        })
        .collect()
}

fn conjugate(q: &[usize], samples: usize) -> Vec<usize> {
    q.iter().map(|&k| (samples - k) % samples).collect()
}

/// Computes the `bands` smallest eigenvalues at every torus point. Points
/// related by `theta -> conj(theta)` share one solve.
pub fn sweep_theta(
    medium: &PeriodicMedium,
    grid: &Grid,
    samples: usize,
    bands: usize,
    opts: &EigenOptions,
) -> Result<BandStructure> {
    if samples < 4 {
        return Err(Error::Resolution(format!("need at least 4 torus samples per axis, got {samples}")));
    }
    let points = torus_points(grid.dim(), samples);
    let index_of = |q: &[usize]| q.iter().rev().fold(0, |acc, &k| acc * samples + k);
    let representatives: Vec<usize> = (0..points.len())
        .filter(|&t| index_of(&conjugate(&points[t], samples)) >= t)
        .collect();
    let solved: Vec<(usize, Vec<f64>, f64, usize)> = representatives
        .par_iter()
        .map(|&t| {
            let q = &points[t];
            let run = || {
                let op = assemble_bloch(medium, grid, &phases(q, samples))?;
                solve_operator(&op, bands, opts)
            };
            run()
                .map(|r| {
                    let worst = r.residuals.iter().copied().fold(0.0, f64::max);
                    (t, r.values, worst, r.iterations)
                })
                .map_err(|e| Error::AtTheta {
                    theta: q.clone(),
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;

    let mut sheets = vec![Vec::new(); points.len()];
    let mut max_residual = 0.0f64;
    let mut iterations = 0;
    for (t, values, worst, iters) in solved {
        let partner = index_of(&conjugate(&points[t], samples));
        sheets[partner] = values.clone();
        sheets[t] = values;
        max_residual = max_residual.max(worst);
        iterations += iters;
    }
    Ok(BandStructure::from_sheets(samples, points, sheets, max_residual, iterations))
}

/// Gaps of a sampled spectrum inside the window `[0, L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub window: f64,
    /// Open gaps, ascending and disjoint.
    pub gaps: Vec<(f64, f64)>,
    /// Merged covered parts of `[0, L]`; together with `gaps` they tile the window.
    pub coverage: Vec<(f64, f64)>,
    pub merge_tol: f64,
}

/// Tolerance below which uncovered stretches count as sampling noise.
pub fn merge_tolerance(configured: f64, window: f64, max_residual: f64) -> f64 {
    configured.max(1e-3 * window).max(10.0 * max_residual)
}

/// Gaps left in `[0, L]` by the given band intervals. Stretches no wider than
/// `merge_tol` are absorbed into the neighbouring bands.
pub fn gaps_from_intervals(intervals: &[(f64, f64)], window: f64, merge_tol: f64) -> GapReport {
    let mut clipped: Vec<(f64, f64)> = intervals
        .iter()
        .map(|&(lo, hi)| (lo.max(0.0), hi.min(window)))
        .filter(|(lo, hi)| lo <= hi)
        .collect();
    clipped.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut coverage: Vec<(f64, f64)> = Vec::new();
    let mut cursor = 0.0;
    let mut open: Option<(f64, f64)> = None;
    let mut gaps = Vec::new();
    for (lo, hi) in clipped {
        match open.as_mut() {
            Some(cur) if lo <= cur.1 + merge_tol => cur.1 = cur.1.max(hi),
            _ => {
                if let Some(done) = open.take() {
                    coverage.push(done);
                }
                if lo > cursor + merge_tol {
                    gaps.push((cursor, lo));
                    open = Some((lo, hi));
                } else {
                    open = Some((cursor.min(lo), hi));
                }
            }
        }
        cursor = open.map_or(cursor, |c| c.1);
    }
    if let Some(done) = open.take() {
        coverage.push(done);
    }
    if window > cursor + merge_tol {
        gaps.push((cursor, window));
    } else if let Some(last) = coverage.last_mut() {
        last.1 = window;
    }
    GapReport {
        window,
        gaps,
        coverage,
        merge_tol,
    }
}

/// Gap report of a sweep; the last band must start above `L`.
pub fn extract_gaps(bands: &BandStructure, window: f64, merge_tol: f64) -> Result<GapReport> {
    let last = bands.band_intervals.last().map_or(f64::NEG_INFINITY, |b| b.0);
    if last <= window {
        return Err(Error::InsufficientBands {
            bands: bands.bands(),
            band_min: last,
            window,
        });
    }
    Ok(gaps_from_intervals(&bands.band_intervals, window, merge_tol))
}

/// Initial band count for `m` target gaps.
pub fn initial_bands(m: usize) -> usize {
    4 * m + 6
}

/// Sweeps with growing band counts (x1.5) until the window `[0, L]` is resolved.
pub fn sweep_resolved(
    medium: &PeriodicMedium,
    grid: &Grid,
    samples: usize,
    start_bands: usize,
    max_bands: usize,
    window: f64,
    opts: &EigenOptions,
) -> Result<BandStructure> {
    let mut bands = start_bands.max(1);
    loop {
        let sweep = sweep_theta(medium, grid, samples, bands.min(grid.len()), opts)?;
        let last = sweep.band_intervals.last().map_or(f64::NEG_INFINITY, |b| b.0);
        if last > window {
            return Ok(sweep);
        }
        if bands >= max_bands || bands >= grid.len() {
            return Err(Error::InsufficientBands {
                bands,
                band_min: last,
                window,
            });
        }
        bands = (bands + bands.div_ceil(2)).min(max_bands);
    }
}

/// Choice of the finite-difference grid for a given medium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridPolicy {
    Fixed(usize),
    /// Smallest multiple of 8 in `[min, max]` that resolves the shell with
    /// three cells; `max` (snap mode) when none does.
    Auto { min: usize, max: usize },
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy::Auto { min: 64, max: 128 }
    }
}

impl GridPolicy {
    pub fn grid_for(&self, medium: &PeriodicMedium) -> Result<Grid> {
        let points = match *self {
            GridPolicy::Fixed(n) => n,
            GridPolicy::Auto { min, max } => {
                if medium.geometry().inclusion_count() == 0 {
                    min
                } else {
                    let needed = (3.0 / medium.delta() - 1e-9).ceil().max(min as f64) as usize;
                    needed.div_ceil(8).saturating_mul(8).min(max)
                }
            }
        };
        Grid::new(medium.dim(), points)
    }
}

/// Settings shared by every epsilon of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudySettings {
    pub gamma: f64,
    pub policy: GridPolicy,
    pub samples: usize,
    /// Starting band count; `None` uses `4 m + 6`.
    pub bands: Option<usize>,
    pub max_bands: usize,
    pub merge_tol: f64,
    pub eigen: EigenOptions,
}

impl Default for StudySettings {
    fn default() -> Self {
        Self {
            gamma: 3.2,
            policy: GridPolicy::default(),
            samples: 8,
            bands: None,
            max_bands: 200,
            merge_tol: 0.0,
            eigen: EigenOptions::default(),
        }
    }
}

/// One epsilon of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub epsilon: f64,
    pub points: usize,
    pub mode: ResolutionMode,
    pub bands: BandStructure,
    pub report: GapReport,
    /// Detected gap matched to each target, if any gap was found.
    pub matched: Vec<Option<(f64, f64)>>,
    /// `|sigma_j^eps - alpha_j|` per target.
    pub lower_errors: Vec<Option<f64>>,
    /// `|mu_j^eps - beta_j|` per target.
    pub upper_errors: Vec<Option<f64>>,
    pub count_matches: bool,
}

/// Designs the medium once per epsilon, sweeps the torus and compares the
/// detected gaps with the targets.
pub fn convergence_study(
    spec: &GapSpec,
    geom: &UnitCellGeometry,
    epsilons: &[f64],
    settings: &StudySettings,
) -> Result<Vec<StudyRow>> {
    if epsilons.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::Precondition {
            field: "epsilons".into(),
            reason: "must be strictly descending".into(),
        });
    }
    let coeffs = if spec.is_empty() {
        None
    } else {
        Some(design_coefficients(spec, geom, settings.gamma)?)
    };
    let start_bands = settings.bands.unwrap_or_else(|| initial_bands(spec.len()));
    epsilons
        .iter()
        .map(|&eps| {
            let medium = match &coeffs {
                Some(c) => PeriodicMedium::new(geom.clone(), c.clone(), eps)?,
                None => PeriodicMedium::homogeneous(geom.dim(), eps)?,
            };
            let grid = settings.policy.grid_for(&medium)?;
            let mode = crate::discretization::validate_resolution(&medium, &grid);
            let bands = sweep_resolved(
                &medium,
                &grid,
                settings.samples,
                start_bands,
                settings.max_bands,
                spec.window(),
                &settings.eigen,
            )?;
            let tol = merge_tolerance(settings.merge_tol, spec.window(), bands.max_residual);
            let report = extract_gaps(&bands, spec.window(), tol)?;
            let matched = match_targets(spec.intervals(), &report.gaps);
            let lower_errors = matched
                .iter()
                .zip(spec.intervals())
                .map(|(g, t)| g.map(|g| (g.0 - t.0).abs()))
                .collect();
            let upper_errors = matched
                .iter()
                .zip(spec.intervals())
                .map(|(g, t)| g.map(|g| (g.1 - t.1).abs()))
                .collect();
            Ok(StudyRow {
                epsilon: eps,
                points: grid.points(),
                mode,
                count_matches: report.gaps.len() == spec.len(),
                bands,
                report,
                matched,
                lower_errors,
                upper_errors,
            })
        })
        .collect()
}

/// Pairs targets with detected gaps: in order when the counts agree, by
/// nearest endpoints otherwise.
fn match_targets(targets: &[(f64, f64)], gaps: &[(f64, f64)]) -> Vec<Option<(f64, f64)>> {
    if gaps.len() == targets.len() {
        return gaps.iter().copied().map(Some).collect();
    }
    targets
        .iter()
        .map(|&(a, b)| {
            gaps.iter()
                .copied()
                .min_by(|x, y| {
                    let dx = (x.0 - a).abs() + (x.1 - b).abs();
                    let dy = (y.0 - a).abs() + (y.1 - b).abs();
                    dx.total_cmp(&dy)
                })
        })
        .collect()
}

/// `lambda_k^N <= lambda_k^theta <= lambda_k^D` for the `k` smallest eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct EnclosureReport {
    pub neumann: Vec<f64>,
    pub bloch: Vec<f64>,
    pub dirichlet: Vec<f64>,
    /// Indices where an inequality fails by more than the slack.
    pub violations: Vec<usize>,
}

impl EnclosureReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Compares Neumann, Bloch and Dirichlet spectra on one grid. `slack` is
/// relative to `max(1, |lambda|)`.
pub fn enclosure_check(
    medium: &PeriodicMedium,
    grid: &Grid,
    phases: &[f64],
    k: usize,
    slack: f64,
    opts: &EigenOptions,
) -> Result<EnclosureReport> {
    let neumann = solve_operator(&assemble_neumann(medium, grid)?, k, opts)?.values;
    let bloch = solve_operator(&assemble_bloch(medium, grid, phases)?, k, opts)?.values;
    let dirichlet = solve_operator(&assemble_dirichlet(medium, grid)?, k, opts)?.values;
    let violations = (0..k)
        .filter(|&i| {
            let lo_ok = neumann[i] <= bloch[i] + slack * bloch[i].abs().max(1.0);
            let hi_ok = bloch[i] <= dirichlet[i] + slack * dirichlet[i].abs().max(1.0);
            !(lo_ok && hi_ok)
        })
        .collect();
    Ok(EnclosureReport {
        neumann,
        bloch,
        dirichlet,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral_design::MediumCoefficients;

    #[test]
    fn interval_arithmetic_example() {
        let r = gaps_from_intervals(&[(0.0, 1.0), (2.0, 3.0), (2.5, 5.0)], 5.0, 0.0);
        assert_eq!(r.gaps, vec![(1.0, 2.0)]);
        assert_eq!(r.coverage, vec![(0.0, 1.0), (2.0, 5.0)]);
    }

    #[test]
    fn narrow_gaps_are_merged() {
        let r = gaps_from_intervals(&[(0.0, 1.0), (1.001, 3.0), (4.0, 12.0)], 10.0, 0.01);
        assert_eq!(r.gaps, vec![(3.0, 4.0)]);
        assert_eq!(r.coverage, vec![(0.0, 3.0), (4.0, 10.0)]);
    }

    #[test]
    fn uncovered_tail_is_a_gap() {
        let r = gaps_from_intervals(&[(0.0, 1.0), (12.0, 20.0)], 10.0, 0.0);
        assert_eq!(r.gaps, vec![(1.0, 10.0)]);
    }

    #[test]
    fn unresolved_window_is_refused() {
        let bs = BandStructure::from_sheets(4, vec![vec![0]], vec![vec![0.0, 3.0]], 0.0, 0);
        assert!(matches!(extract_gaps(&bs, 5.0, 0.0), Err(Error::InsufficientBands { .. })));
        assert!(extract_gaps(&bs, 2.0, 0.0).is_ok());
    }

    #[test]
    fn conjugate_pairs_cover_the_torus() {
        for m in [4, 5, 8] {
            let pts = torus_points(2, m);
            for q in &pts {
                let c = conjugate(q, m);
                assert_eq!(conjugate(&c, m), *q);
            }
        }
    }

    #[test]
    fn grid_policy_examples() {
        let geom = UnitCellGeometry::new(2, 0.2, vec![vec![0.5, 0.5]]).unwrap();
        let c = MediumCoefficients::new(vec![1.0], vec![1.0], 3.2).unwrap();
        let at = |eps: f64| {
            let m = PeriodicMedium::new(geom.clone(), c.clone(), eps).unwrap();
            GridPolicy::default().grid_for(&m).unwrap().points()
        };
        assert_eq!(at(0.4), 64);
        assert_eq!(at(0.3), 64);
        assert_eq!(at(0.2), 104);
        assert_eq!(at(0.1), 128);
    }

    #[test]
    fn constant_medium_sweep_matches_dispersion_extrema() {
        let m = PeriodicMedium::homogeneous(2, 0.5).unwrap();
        let g = Grid::new(2, 8).unwrap();
        let bs = sweep_theta(&m, &g, 4, 6, &EigenOptions::default()).unwrap();
        let h = g.spacing();
        let mut exact_sheets = Vec::new();
        for q in &bs.theta_indices {
            let phi = phases(q, 4);
            let mut vals: Vec<f64> = (0..64)
                .map(|node| {
                    let k = [node % 8, node / 8];
                    (0..2)
                        .map(|d| {
                            let s = ((2.0 * PI * k[d] as f64 + phi[d]) * h / 2.0).sin();
                            4.0 * 4.0 / (h * h) * s * s
                        })
                        .sum()
                })
                .collect();
            vals.sort_by(f64::total_cmp);
            exact_sheets.push(vals);
        }
        for k in 0..6 {
            let lo = exact_sheets.iter().map(|s| s[k]).fold(f64::INFINITY, f64::min);
            let hi = exact_sheets.iter().map(|s| s[k]).fold(f64::NEG_INFINITY, f64::max);
            assert!((bs.band_intervals[k].0 - lo).abs() < 1e-8 * lo.max(1.0));
            assert!((bs.band_intervals[k].1 - hi).abs() < 1e-8 * hi.max(1.0));
        }
        assert!(bs.sheets[0][0].abs() < 1e-9);
    }
}
