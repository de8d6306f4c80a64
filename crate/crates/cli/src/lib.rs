#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Command implementations behind the `gapdesign` binary.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use gapdesign::band_analysis::{
    convergence_study, extract_gaps, initial_bands, merge_tolerance, sweep_resolved, BandStructure,
    GapReport, StudyRow,
};
use gapdesign::discretization::{assemble_radial, assemble_radial_layers, validate_resolution, RadialLayer};
use gapdesign::geometry::{PeriodicMedium, UnitCellGeometry};
use gapdesign::homogenization::{compute_a_hat, solve_cell_problem};
use gapdesign::spectral_design::{
    compute_sigma_rho, design_coefficients, limit_dispersion, limit_spectrum, LimitSpectrum,
    MediumCoefficients,
};

pub use config::RunConfig;

/// Settings that come from the command line rather than the config file.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub out: PathBuf,
    pub seed: u64,
}

impl RunContext {
    pub fn new(cfg: &RunConfig, out: Option<PathBuf>, seed: Option<u64>) -> Self {
        Self {
            out: out.unwrap_or_else(|| cfg.output.clone()),
            seed: seed.unwrap_or(cfg.seed),
        }
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out)
            .with_context(|| format!("creating output directory {}", self.out.display()))?;
        let path = self.out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignReport {
    pub intervals: Vec<[f64; 2]>,
    #[serde(rename = "L")]
    pub window: f64,
    pub gamma: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub sigma: Vec<f64>,
    pub rho: Vec<f64>,
    pub mu: Vec<f64>,
    pub limit_bands: Vec<[f64; 2]>,
}

fn designed(cfg: &RunConfig) -> Result<(MediumCoefficients, LimitSpectrum)> {
    if cfg.intervals.is_empty() {
        bail!("intervals: the design needs at least one target gap");
    }
    let spec = cfg.gap_spec()?;
    let geom = cfg.geometry()?;
    let coeffs = design_coefficients(&spec, &geom, cfg.gamma).context("spectral design")?;
    let (sigma, rho) = compute_sigma_rho(&coeffs, &geom).context("spectral design")?;
    let limit = LimitSpectrum::from_sigma_rho(sigma, rho).context("secular equation")?;
    Ok((coeffs, limit))
}

fn pairs(v: &[(f64, f64)]) -> Vec<[f64; 2]> {
    v.iter().map(|&(a, b)| [a, b]).collect()
}

/// Coefficients, limit data and limit bands; fails unless `mu` reproduces `beta`.
pub fn cmd_design(cfg: &RunConfig, ctx: &RunContext) -> Result<DesignReport> {
    let (coeffs, limit) = designed(cfg)?;
    for (j, (&mu, target)) in limit.mu().iter().zip(&cfg.intervals).enumerate() {
        let beta = target[1];
        if (mu - beta).abs() > cfg.tolerances.root * beta.abs().max(1.0) {
            bail!("design check failed: mu[{j}] = {mu} but beta[{j}] = {beta}");
        }
    }
    let report = DesignReport {
        intervals: cfg.intervals.clone(),
        window: cfg.window,
        gamma: cfg.gamma,
        a: coeffs.a().to_vec(),
        b: coeffs.b().to_vec(),
        sigma: limit.sigma().to_vec(),
        rho: limit.rho().to_vec(),
        mu: limit.mu().to_vec(),
        limit_bands: pairs(&limit_spectrum(&limit, cfg.window)?),
    };
    ctx.write_json("design.json", &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionSample {
    pub s: f64,
    pub roots: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitReport {
    pub sigma: Vec<f64>,
    pub rho: Vec<f64>,
    pub mu: Vec<f64>,
    pub gaps: Vec<[f64; 2]>,
    pub bands: Vec<[f64; 2]>,
    pub dispersion: Vec<DispersionSample>,
}

/// Values of `s = |xi|^2 a_hat` at which the limit dispersion is tabulated.
pub const DISPERSION_SAMPLES: [f64; 5] = [0.0, 0.5, 1.0, 10.0, 100.0];

pub fn cmd_limit(cfg: &RunConfig, ctx: &RunContext) -> Result<LimitReport> {
    let (_, limit) = designed(cfg)?;
    let dispersion = DISPERSION_SAMPLES
        .iter()
        .map(|&s| Ok(DispersionSample { s, roots: limit_dispersion(s, &limit)? }))
        .collect::<Result<_>>()?;
    let report = LimitReport {
        sigma: limit.sigma().to_vec(),
        rho: limit.rho().to_vec(),
        mu: limit.mu().to_vec(),
        gaps: pairs(&limit.gaps()),
        bands: pairs(&limit_spectrum(&limit, cfg.window)?),
        dispersion,
    };
    ctx.write_json("limit.json", &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialRow {
    pub epsilon: f64,
    pub lambda_1: f64,
    pub sigma: f64,
    pub lambda_2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialReport {
    pub rows: Vec<RadialRow>,
    /// `sqrt(lambda_1)` of the unit-coefficient unit ball, with its exact value.
    pub sanity: (f64, f64),
}

/// First zero of the Bessel function `J_0`.
pub const BESSEL_J0_FIRST_ZERO: f64 = 2.404_825_557_695_773;

pub fn cmd_radial(cfg: &RunConfig, ctx: &RunContext) -> Result<RadialReport> {
    let (coeffs, _) = designed(cfg)?;
    let geom = cfg.geometry()?;
    let index = cfg.radial.inclusion;
    let (sigma, _) = compute_sigma_rho(
        &MediumCoefficients::new(
            vec![coeffs.a()[index]],
            vec![coeffs.b()[index]],
            coeffs.gamma(),
        )?,
        &geom.single(index)?,
    )?;
    let epsilons = if cfg.radial.epsilons.is_empty() { &cfg.epsilons } else { &cfg.radial.epsilons };
    if epsilons.is_empty() {
        bail!("radial.epsilons: no epsilon values given");
    }
    let rows = epsilons
        .iter()
        .map(|&eps| {
            let medium = PeriodicMedium::new(geom.clone(), coeffs.clone(), eps)?;
            let op = assemble_radial(&medium, index, cfg.radial.cells_per_unit, cfg.radial.min_shell_cells)?;
            let values = op.smallest(2)?;
            Ok(RadialRow {
                epsilon: eps,
                lambda_1: values[0],
                sigma: sigma[0],
                lambda_2: values[1],
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let unit = [RadialLayer {
        outer: 1.0,
        a: 1.0,
        b: 1.0,
        cells: cfg.radial.cells_per_unit,
    }];
    let computed = assemble_radial_layers(geom.dim(), &unit)?.smallest(1)?[0].sqrt();
    let exact = if geom.dim() == 2 { BESSEL_J0_FIRST_ZERO } else { std::f64::consts::PI };

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epsilon", "lambda_1", "lambda_1_minus_sigma", "lambda_2"])?;
    for r in &rows {
        w.write_record([
            r.epsilon.to_string(),
            r.lambda_1.to_string(),
            (r.lambda_1 - r.sigma).to_string(),
            r.lambda_2.to_string(),
        ])?;
    }
    ctx.write("radial.csv", &String::from_utf8(w.into_inner()?)?)?;
    Ok(RadialReport {
        rows,
        sanity: (computed, exact),
    })
}

fn medium_at(cfg: &RunConfig, eps: f64) -> Result<PeriodicMedium> {
    let geom = cfg.geometry()?;
    if cfg.intervals.is_empty() {
        return Ok(PeriodicMedium::homogeneous(geom.dim(), eps)?);
    }
    let coeffs = design_coefficients(&cfg.gap_spec()?, &geom, cfg.gamma)?;
    Ok(PeriodicMedium::new(geom, coeffs, eps)?)
}

fn bands_file(eps: f64) -> String {
    format!("bands_eps{eps}.csv")
}

fn bands_csv(bands: &BandStructure) -> Result<String> {
    let dim = bands.theta_indices.first().map_or(0, |q| q.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (1..=dim).map(|d| format!("q{d}")).collect();
    header.push("band".into());
    header.push("eigenvalue".into());
    w.write_record(&header)?;
    for (q, sheet) in bands.theta_indices.iter().zip(&bands.sheets) {
        for (k, value) in sheet.iter().enumerate() {
            let mut record: Vec<String> = q.iter().map(|v| v.to_string()).collect();
            record.push((k + 1).to_string());
            record.push(value.to_string());
            w.write_record(&record)?;
        }
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Sweep at one epsilon: the first of `--epsilon` or the config list.
fn single_sweep(cfg: &RunConfig, ctx: &RunContext, epsilon: Option<f64>) -> Result<(f64, PeriodicMedium, usize, BandStructure)> {
    let eps = match epsilon.or_else(|| cfg.epsilons.first().copied()) {
        Some(e) => e,
        None => bail!("epsilons: no epsilon given"),
    };
    let medium = medium_at(cfg, eps)?;
    let grid = cfg.grid_policy().grid_for(&medium)?;
    let start = cfg.bands.count().unwrap_or_else(|| initial_bands(cfg.intervals.len()));
    let bands = sweep_resolved(
        &medium,
        &grid,
        cfg.samples,
        start,
        cfg.max_bands,
        cfg.window,
        &cfg.eigen_options(ctx.seed),
    )?;
    ctx.write(&bands_file(eps), &bands_csv(&bands)?)?;
    Ok((eps, medium, grid.points(), bands))
}

pub fn cmd_bloch(cfg: &RunConfig, ctx: &RunContext, epsilon: Option<f64>) -> Result<BandStructure> {
    Ok(single_sweep(cfg, ctx, epsilon)?.3)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub epsilon: f64,
    #[serde(rename = "N")]
    pub points: usize,
    #[serde(rename = "M")]
    pub samples: usize,
    #[serde(rename = "K")]
    pub bands: usize,
    pub mode: String,
    pub merge_tol: f64,
    pub max_residual: f64,
    pub band_intervals: Vec<[f64; 2]>,
    pub gaps: Vec<[f64; 2]>,
    pub gap_count: usize,
    pub count_matches: bool,
    pub lower_errors: Vec<Option<f64>>,
    pub upper_errors: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapsDocument {
    #[serde(rename = "L")]
    pub window: f64,
    pub targets: Vec<[f64; 2]>,
    pub gamma: f64,
    pub seed: u64,
    pub runs: Vec<RunSummary>,
    pub passed: Option<bool>,
    pub findings: Vec<String>,
}

fn summarize(row: &StudyRow) -> RunSummary {
    RunSummary {
        epsilon: row.epsilon,
        points: row.points,
        samples: row.bands.samples,
        bands: row.bands.bands(),
        mode: row.mode.label().into(),
        merge_tol: row.report.merge_tol,
        max_residual: row.bands.max_residual,
        band_intervals: pairs(&row.bands.band_intervals),
        gaps: pairs(&row.report.gaps),
        gap_count: row.report.gaps.len(),
        count_matches: row.count_matches,
        lower_errors: row.lower_errors.clone(),
        upper_errors: row.upper_errors.clone(),
    }
}

pub fn cmd_gaps(cfg: &RunConfig, ctx: &RunContext, epsilon: Option<f64>) -> Result<GapsDocument> {
    let (eps, medium, points, bands) = single_sweep(cfg, ctx, epsilon)?;
    let tol = merge_tolerance(cfg.tolerances.merge, cfg.window, bands.max_residual);
    let report: GapReport = extract_gaps(&bands, cfg.window, tol)?;
    let grid = cfg.grid_policy().grid_for(&medium)?;
    let spec = cfg.gap_spec()?;
    let errors = |pick: fn(&(f64, f64)) -> f64| -> Vec<Option<f64>> {
        if report.gaps.len() != spec.len() {
            return vec![None; spec.len()];
        }
        report
            .gaps
            .iter()
            .zip(spec.intervals())
            .map(|(g, t)| Some((pick(g) - pick(t)).abs()))
            .collect()
    };
    let row = RunSummary {
        epsilon: eps,
        points,
        samples: bands.samples,
        bands: bands.bands(),
        mode: validate_resolution(&medium, &grid).label().into(),
        merge_tol: tol,
        max_residual: bands.max_residual,
        band_intervals: pairs(&bands.band_intervals),
        gaps: pairs(&report.gaps),
        gap_count: report.gaps.len(),
        count_matches: report.gaps.len() == spec.len(),
        lower_errors: errors(|p| p.0),
        upper_errors: errors(|p| p.1),
    };
    let doc = GapsDocument {
        window: cfg.window,
        targets: cfg.intervals.clone(),
        gamma: cfg.gamma,
        seed: ctx.seed,
        runs: vec![row],
        passed: None,
        findings: Vec::new(),
    };
    ctx.write_json("gaps.json", &doc)?;
    Ok(doc)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AhatDocument {
    pub matrix: Vec<Vec<f64>>,
    pub geometry_hash: String,
    #[serde(rename = "N")]
    pub points: usize,
    pub residuals: Vec<f64>,
}

/// SHA-256 of a canonical text form of the geometry.
pub fn geometry_hash(geom: &UnitCellGeometry) -> String {
    let mut canonical = format!("n={};r={:?};centers=", geom.dim(), geom.radius());
    for c in geom.centers() {
        let _ = write!(canonical, "{c:?};");
    }
    Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn cmd_cell(cfg: &RunConfig, ctx: &RunContext) -> Result<AhatDocument> {
    let geom = cfg.geometry()?;
    let grid = gapdesign::discretization::Grid::new(geom.dim(), cfg.cell.points)?;
    let sol = solve_cell_problem(&geom, &grid)?;
    let doc = AhatDocument {
        matrix: compute_a_hat(&sol).a_hat,
        geometry_hash: geometry_hash(&geom),
        points: grid.points(),
        residuals: sol.residuals.clone(),
    };
    ctx.write_json("ahat.json", &doc)?;
    Ok(doc)
}

/// Whether a study meets the configured thresholds, with the reasons if not.
pub fn assess(cfg: &RunConfig, rows: &[StudyRow]) -> (bool, Vec<String>) {
    let mut findings = Vec::new();
    let Some(last) = rows.last() else {
        return (false, vec!["no epsilon values were run".into()]);
    };
    if cfg.intervals.is_empty() {
        for row in rows {
            if !row.report.gaps.is_empty() {
                findings.push(format!("eps = {}: {} gaps in a medium without targets", row.epsilon, row.report.gaps.len()));
            }
        }
        return (findings.is_empty(), findings);
    }
    if !last.count_matches {
        findings.push(format!(
            "eps = {}: {} gaps detected, {} targeted",
            last.epsilon,
            last.report.gaps.len(),
            cfg.intervals.len()
        ));
    }
    let t = &cfg.thresholds;
    for (j, target) in cfg.intervals.iter().enumerate() {
        let checks = [
            ("lower", t.lower, target[0], rows.iter().map(|r| r.lower_errors[j]).collect::<Vec<_>>()),
            ("upper", t.upper, target[1], rows.iter().map(|r| r.upper_errors[j]).collect()),
        ];
        for (side, limit, value, errors) in checks {
            match errors.last().copied().flatten() {
                Some(e) if e / value <= limit => {}
                Some(e) => findings.push(format!("gap {j} {side} edge: relative error {} exceeds {limit}", e / value)),
                None => findings.push(format!("gap {j} {side} edge: no gap matched at eps = {}", last.epsilon)),
            }
            if errors.iter().any(|e| e.is_none()) {
                findings.push(format!("gap {j} {side} edge: missing at some epsilon"));
                continue;
            }
            let e: Vec<f64> = errors.into_iter().flatten().collect();
            let rises = e.windows(2).filter(|w| w[1] > w[0]).count();
            if rises > t.non_monotone_steps {
                findings.push(format!("gap {j} {side} edge: errors rise {rises} times across epsilon"));
            }
        }
    }
    (findings.is_empty(), findings)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOutcome {
    pub document: GapsDocument,
    pub passed: bool,
}

/// Full pipeline over the epsilon list: band CSVs, `convergence.csv` and `gaps.json`.
pub fn cmd_verify(cfg: &RunConfig, ctx: &RunContext) -> Result<VerifyOutcome> {
    if cfg.epsilons.is_empty() {
        bail!("epsilons: verify needs at least one epsilon");
    }
    let spec = cfg.gap_spec()?;
    let geom = cfg.geometry()?;
    let rows = convergence_study(&spec, &geom, &cfg.epsilons, &cfg.study_settings(ctx.seed))?;
    for row in &rows {
        ctx.write(&bands_file(row.epsilon), &bands_csv(&row.bands)?)?;
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "epsilon", "N", "mode", "K", "gap_count", "gap", "sigma_eps", "mu_eps", "abs_err_sigma", "abs_err_mu",
    ])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for row in &rows {
        let head = [
            row.epsilon.to_string(),
            row.points.to_string(),
            row.mode.label().to_string(),
            row.bands.bands().to_string(),
            row.report.gaps.len().to_string(),
        ];
        if spec.is_empty() {
            let mut rec = head.to_vec();
            rec.extend(std::iter::repeat_n(String::new(), 5));
            w.write_record(&rec)?;
        }
        for j in 0..spec.len() {
            let mut rec = head.to_vec();
            rec.push((j + 1).to_string());
            rec.push(opt(row.matched[j].map(|g| g.0)));
            rec.push(opt(row.matched[j].map(|g| g.1)));
            rec.push(opt(row.lower_errors[j]));
            rec.push(opt(row.upper_errors[j]));
            w.write_record(&rec)?;
        }
    }
    ctx.write("convergence.csv", &String::from_utf8(w.into_inner()?)?)?;

    let (passed, findings) = assess(cfg, &rows);
    let document = GapsDocument {
        window: cfg.window,
        targets: cfg.intervals.clone(),
        gamma: cfg.gamma,
        seed: ctx.seed,
        runs: rows.iter().map(summarize).collect(),
        passed: Some(passed),
        findings,
    };
    ctx.write_json("gaps.json", &document)?;
    Ok(VerifyOutcome { document, passed })
}

/// Human-readable execution plan; performs no solves.
pub fn plan(cfg: &RunConfig, command: &str, ctx: &RunContext) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "command: {command}")?;
    writeln!(out, "output: {}", ctx.out.display())?;
    writeln!(out, "seed: {}", ctx.seed)?;
    writeln!(out, "targets: {:?}, L = {}", cfg.intervals, cfg.window)?;
    let geom = cfg.geometry()?;
    writeln!(out, "geometry: n = {}, r = {}, {} inclusions", geom.dim(), geom.radius(), geom.inclusion_count())?;
    if !cfg.intervals.is_empty() {
        let coeffs = design_coefficients(&cfg.gap_spec()?, &geom, cfg.gamma)?;
        writeln!(out, "coefficients: a = {:?}, b = {:?}, gamma = {}", coeffs.a(), coeffs.b(), cfg.gamma)?;
    }
    match command {
        "bloch" | "gaps" | "verify" => {
            let points = cfg.samples.pow(geom.dim() as u32);
            let start = cfg.bands.count().unwrap_or_else(|| initial_bands(cfg.intervals.len()));
            for &eps in &cfg.epsilons {
                let medium = medium_at(cfg, eps)?;
                let grid = cfg.grid_policy().grid_for(&medium)?;
                writeln!(
                    out,
                    "eps = {eps}: N = {}, mode = {}, unknowns = {}, torus points = {points}, K from {start}",
                    grid.points(),
                    validate_resolution(&medium, &grid).label(),
                    grid.len()
                )?;
                if command != "verify" {
                    break;
                }
            }
        }
        "radial" => writeln!(out, "radial: inclusion {}, {} cells per unit", cfg.radial.inclusion, cfg.radial.cells_per_unit)?,
        "cell" => writeln!(out, "cell problem: N = {}", cfg.cell.points)?,
        _ => {}
    }
    Ok(out)
}
