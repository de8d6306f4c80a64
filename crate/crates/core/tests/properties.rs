use std::f64::consts::PI;

use proptest::prelude::*;

use gapdesign::band_analysis::{
    enclosure_check, extract_gaps, gaps_from_intervals, merge_tolerance, sweep_theta,
};
use gapdesign::discretization::{assemble_bloch, Grid};
use gapdesign::eigensolver::{dense_oracle, smallest_k, solve_operator, EigenOptions};
use gapdesign::geometry::{PeriodicMedium, UnitCellGeometry};
use gapdesign::spectral_design::{design_coefficients, GapSpec, MediumCoefficients};

fn ball_medium(a: f64, b: f64, eps: f64) -> PeriodicMedium {
    let geom = UnitCellGeometry::new(2, 0.25, vec![vec![0.5, 0.5]]).unwrap();
    let coeffs = MediumCoefficients::new(vec![a], vec![b], 3.5).unwrap();
    PeriodicMedium::new(geom, coeffs, eps).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bloch_operator_is_hermitian_with_positive_mass(
        a in 0.1f64..10.0,
        b in 0.1f64..10.0,
        eps in 0.3f64..0.5,
        p1 in 0.0f64..(2.0 * PI),
        p2 in 0.0f64..(2.0 * PI),
    ) {
        let m = ball_medium(a, b, eps);
        let op = assemble_bloch(&m, &Grid::new(2, 16).unwrap(), &[p1, p2]).unwrap();
        prop_assert!(op.stiffness.hermitian_defect() <= 1e-12 * op.stiffness.norm_inf());
        prop_assert!(op.mass.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn conjugate_phases_give_equal_spectra(
        a in 0.1f64..10.0,
        p1 in 0.0f64..(2.0 * PI),
        p2 in 0.0f64..(2.0 * PI),
    ) {
        let m = ball_medium(a, 2.0, 0.5);
        let g = Grid::new(2, 12).unwrap();
        let op = assemble_bloch(&m, &g, &[p1, p2]).unwrap();
        let conj = assemble_bloch(&m, &g, &[2.0 * PI - p1, 2.0 * PI - p2]).unwrap();
        let x = dense_oracle(&op.stiffness, &op.mass).unwrap();
        let y = dense_oracle(&conj.stiffness, &conj.mass).unwrap();
        for (u, v) in x.iter().zip(&y) {
            prop_assert!((u - v).abs() <= 1e-9 * u.abs().max(1.0));
        }
    }

    #[test]
    fn iterative_and_dense_agree(
        a in 0.2f64..5.0,
        b in 0.5f64..20.0,
        p1 in 0.0f64..(2.0 * PI),
        p2 in 0.0f64..(2.0 * PI),
    ) {
        let m = ball_medium(a, b, 0.4);
        let op = assemble_bloch(&m, &Grid::new(2, 16).unwrap(), &[p1, p2]).unwrap();
        let dense = dense_oracle(&op.stiffness, &op.mass).unwrap();
        let it = solve_operator(&op, 6, &EigenOptions::default()).unwrap();
        for (j, v) in it.values.iter().enumerate() {
            prop_assert!((v - dense[j]).abs() <= 1e-9 * dense[j].abs().max(1.0));
            prop_assert!(*v >= -1e-9 * op.stiffness.norm_inf());
        }
    }
}

#[test]
fn constant_vector_is_in_the_periodic_kernel() {
    let m = ball_medium(1.0, 3.0, 0.4);
    let op = assemble_bloch(&m, &Grid::new(2, 16).unwrap(), &[0.0, 0.0]).unwrap();
    let r = smallest_k(&op.stiffness, &op.mass, 2).unwrap();
    assert!(r.values[0].abs() < 1e-9);
    assert!(r.values[1] > 1e-3);
}

#[test]
fn antiperiodic_enclosure_for_constant_medium() {
    let m = PeriodicMedium::homogeneous(2, 0.5).unwrap();
    let g = Grid::new(2, 16).unwrap();
    let r = enclosure_check(&m, &g, &[PI, PI], 4, 1e-9, &EigenOptions::default()).unwrap();
    assert!(r.holds());
    assert!(r.neumann[0] < r.bloch[0]);
    // sin(pi y_1) sin(pi y_2) is both antiperiodic and zero on the faces
    assert!((r.bloch[0] - r.dirichlet[0]).abs() < 1e-9 * r.dirichlet[0]);
    let r = enclosure_check(&m, &g, &[0.0, 0.0], 4, 1e-9, &EigenOptions::default()).unwrap();
    assert!(r.neumann[0].abs() < 1e-9 && r.bloch[0].abs() < 1e-9);
}

fn designed(eps: f64) -> PeriodicMedium {
    let geom = UnitCellGeometry::new(2, 0.25, vec![vec![0.5, 0.5]]).unwrap();
    let spec = GapSpec::new(vec![(2.0, 5.0)], 10.0).unwrap();
    let coeffs = design_coefficients(&spec, &geom, 3.2).unwrap();
    PeriodicMedium::new(geom, coeffs, eps).unwrap()
}

#[test]
fn doubling_samples_never_shrinks_bands() {
    let m = designed(0.45);
    let g = Grid::new(2, 24).unwrap();
    let opts = EigenOptions::default();
    let coarse = sweep_theta(&m, &g, 4, 6, &opts).unwrap();
    let fine = sweep_theta(&m, &g, 8, 6, &opts).unwrap();
    for (c, f) in coarse.band_intervals.iter().zip(&fine.band_intervals) {
        assert!(f.0 <= c.0 + 1e-9 * c.0.abs().max(1.0));
        assert!(f.1 >= c.1 - 1e-9 * c.1.abs().max(1.0));
    }
    for (c, f) in coarse.band_intervals.iter().zip(&fine.band_intervals) {
        assert!(c.0 <= c.1 && f.0 <= f.1);
    }
    assert!(fine.band_intervals.windows(2).all(|w| w[0].0 <= w[1].0));
    assert!(fine.sheets.iter().all(|s| s.windows(2).all(|w| w[0] <= w[1])));
    assert!(fine.sheets[0][0].abs() < 1e-9);
}

#[test]
fn gaps_avoid_every_sampled_eigenvalue() {
    let m = designed(0.45);
    let g = Grid::new(2, 24).unwrap();
    let bands = sweep_theta(&m, &g, 4, 8, &EigenOptions::default()).unwrap();
    let window = bands.band_intervals.last().unwrap().0 * 0.99;
    let report = extract_gaps(&bands, window, merge_tolerance(0.0, window, bands.max_residual)).unwrap();
    assert!(!report.gaps.is_empty());
    for &(lo, hi) in &report.gaps {
        assert!(0.0 <= lo && lo < hi && hi <= window);
        for sheet in &bands.sheets {
            assert!(sheet.iter().all(|&v| v <= lo || v >= hi));
        }
    }
    // bands and gaps tile the window
    let mut pieces: Vec<(f64, f64)> = report.coverage.iter().chain(&report.gaps).copied().collect();
    pieces.sort_by(|x, y| x.0.total_cmp(&y.0));
    assert_eq!(pieces.first().unwrap().0, 0.0);
    assert_eq!(pieces.last().unwrap().1, window);
    for w in pieces.windows(2) {
        assert_eq!(w[0].1, w[1].0);
    }
}

#[test]
fn constant_medium_has_no_gaps() {
    let m = PeriodicMedium::homogeneous(2, 0.5).unwrap();
    let bands = sweep_theta(&m, &Grid::new(2, 16).unwrap(), 8, 8, &EigenOptions::default()).unwrap();
    let report = gaps_from_intervals(&bands.band_intervals, 50.0, merge_tolerance(0.0, 50.0, bands.max_residual));
    assert!(report.gaps.is_empty(), "{:?}", report.gaps);
}

#[test]
fn sheets_vary_less_on_finer_torus_grids() {
    let m = designed(0.45);
    let g = Grid::new(2, 16).unwrap();
    let jump = |samples: usize| {
        let b = sweep_theta(&m, &g, samples, 2, &EigenOptions::default()).unwrap();
        let mut worst = 0.0f64;
        for (t, q) in b.theta_indices.iter().enumerate() {
            let next = [(q[0] + 1) % samples, q[1]];
            let u = next[0] + samples * next[1];
            worst = worst.max((b.sheets[t][0] - b.sheets[u][0]).abs());
        }
        worst
    };
    assert!(jump(8) < jump(4));
}
