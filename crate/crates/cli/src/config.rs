//! Run configuration, read from TOML. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use gapdesign::band_analysis::{GridPolicy, StudySettings};
use gapdesign::eigensolver::EigenOptions;
use gapdesign::geometry::{validate_geometry, UnitCellGeometry};
use gapdesign::spectral_design::{GapSpec, MediumCoefficients};

/// `"auto"` or an explicit count.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum CountOrAuto {
    Count(usize),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
pub enum AutoTag {
    #[serde(rename = "auto")]
    Auto,
}

impl Default for CountOrAuto {
    fn default() -> Self {
        CountOrAuto::Auto(AutoTag::Auto)
    }
}

impl CountOrAuto {
    pub fn count(&self) -> Option<usize> {
        match self {
            CountOrAuto::Count(n) => Some(*n),
            CountOrAuto::Auto(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub n: usize,
    pub r: f64,
    pub centers: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Points per dimension, or `"auto"` for the per-epsilon policy.
    pub points: CountOrAuto,
    pub min: usize,
    pub max: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            points: CountOrAuto::default(),
            min: 64,
            max: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative agreement required between `mu` and `beta` in the design report.
    pub root: f64,
    pub eigensolver: f64,
    pub merge: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            root: 1e-10,
            eigensolver: 1e-8,
            merge: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadialConfig {
    pub inclusion: usize,
    /// Empty means the main epsilon list.
    pub epsilons: Vec<f64>,
    pub cells_per_unit: usize,
    pub min_shell_cells: usize,
}

impl Default for RadialConfig {
    fn default() -> Self {
        Self {
            inclusion: 0,
            epsilons: Vec::new(),
            cells_per_unit: 1000,
            min_shell_cells: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct CellConfig {
    pub points: usize,
}

impl Default for CellConfig {
    fn default() -> Self {
        Self { points: 128 }
    }
}

/// Thresholds that decide the exit status of `verify`.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// Largest accepted `|sigma_j^eps - alpha_j| / alpha_j` at the smallest epsilon.
    pub lower: f64,
    /// Largest accepted `|mu_j^eps - beta_j| / beta_j` at the smallest epsilon.
    pub upper: f64,
    /// Non-monotone steps tolerated in each error sequence.
    pub non_monotone_steps: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            lower: 0.2,
            upper: 0.2,
            non_monotone_steps: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Target gaps `[alpha_j, beta_j]`; empty for a constant medium.
    pub intervals: Vec<[f64; 2]>,
    #[serde(rename = "L")]
    pub window: f64,
    pub geometry: GeometryConfig,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(rename = "M", default = "default_samples")]
    pub samples: usize,
    #[serde(rename = "K", default)]
    pub bands: CountOrAuto,
    #[serde(default = "default_max_bands")]
    pub max_bands: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub radial: RadialConfig,
    #[serde(default)]
    pub cell: CellConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
}

fn default_gamma() -> f64 {
    3.2
}

fn default_samples() -> usize {
    8
}

fn default_max_bands() -> usize {
    200
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("parsing config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in config {}", path.display()))
    }

    /// Runs every validation that does not require a solve.
    pub fn validate(&self) -> Result<()> {
        self.gap_spec()?;
        let geom = self.geometry()?;
        if geom.inclusion_count() != self.intervals.len() {
            bail!(
                "geometry.centers: {} inclusions for {} target gaps",
                geom.inclusion_count(),
                self.intervals.len()
            );
        }
        if !self.intervals.is_empty() {
            MediumCoefficients::new(vec![1.0], vec![1.0], self.gamma).context("gamma")?;
        }
        if let Some(&eps) = self.epsilons.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            bail!("epsilons: {eps} is outside (0, 1)");
        }
        if self.epsilons.windows(2).any(|w| !(w[0] > w[1])) {
            bail!("epsilons: must be strictly descending");
        }
        if self.samples < 4 {
            bail!("M: need at least 4 torus samples per axis, got {}", self.samples);
        }
        if self.grid.min < 8 || self.grid.min > self.grid.max {
            bail!("grid: need 8 <= min <= max, got min = {}, max = {}", self.grid.min, self.grid.max);
        }
        if let Some(n) = self.grid.points.count() {
            if n < 8 {
                bail!("grid.points: need at least 8, got {n}");
            }
        }
        if self.bands.count() == Some(0) {
            bail!("K: must be positive");
        }
        if !(self.tolerances.eigensolver > 0.0) || !(self.tolerances.root > 0.0) || self.tolerances.merge < 0.0 {
            bail!("tolerances: root and eigensolver must be positive, merge non-negative");
        }
        if !self.intervals.is_empty() && self.radial.inclusion >= self.intervals.len() {
            bail!("radial.inclusion: index {} out of range", self.radial.inclusion);
        }
        Ok(())
    }

    pub fn gap_spec(&self) -> Result<GapSpec> {
        if self.intervals.is_empty() {
            return Ok(GapSpec::without_targets(self.window)?);
        }
        let intervals = self.intervals.iter().map(|p| (p[0], p[1])).collect();
        Ok(GapSpec::new(intervals, self.window)?)
    }

    pub fn geometry(&self) -> Result<UnitCellGeometry> {
        let g = &self.geometry;
        let geom = UnitCellGeometry::new(g.n, g.r, g.centers.clone()).context("geometry")?;
        validate_geometry(&geom).context("geometry")?;
        Ok(geom)
    }

    pub fn grid_policy(&self) -> GridPolicy {
        match self.grid.points.count() {
            Some(n) => GridPolicy::Fixed(n),
            None => GridPolicy::Auto {
                min: self.grid.min,
                max: self.grid.max,
            },
        }
    }

    pub fn eigen_options(&self, seed: u64) -> EigenOptions {
        EigenOptions {
            tol: self.tolerances.eigensolver,
            seed,
            ..EigenOptions::default()
        }
    }

    pub fn study_settings(&self, seed: u64) -> StudySettings {
        StudySettings {
            gamma: self.gamma,
            policy: self.grid_policy(),
            samples: self.samples,
            bands: self.bands.count(),
            max_bands: self.max_bands,
            merge_tol: self.tolerances.merge,
            eigen: self.eigen_options(seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DESK: &str = r#"
intervals = [[2.0, 5.0]]
L = 10.0
epsilons = [0.4, 0.3]

[geometry]
n = 2
r = 0.2
centers = [[0.5, 0.5]]
"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = RunConfig::from_toml(DESK).unwrap();
        assert_eq!(cfg.samples, 8);
        assert_eq!(cfg.bands, CountOrAuto::Auto(AutoTag::Auto));
        assert_eq!(cfg.grid_policy(), GridPolicy::Auto { min: 64, max: 128 });
        assert_eq!(cfg.gamma, 3.2);
    }

    #[test]
    fn explicit_counts() {
        let text = format!("K = 12\n{DESK}\n[grid]\npoints = 32\n");
        let cfg = RunConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.bands.count(), Some(12));
        assert_eq!(cfg.grid_policy(), GridPolicy::Fixed(32));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("colour = 1\n{DESK}");
        assert!(RunConfig::from_toml(&text).is_err());
        let text = format!("{DESK}radius = 0.1\n");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn malformed_gap_names_the_field() {
        let text = DESK.replace("[[2.0, 5.0]]", "[[2.0, 2.0]]");
        let err = format!("{:#}", RunConfig::from_toml(&text).unwrap_err());
        assert!(err.contains("intervals[0].beta"), "{err}");
    }

    #[test]
    fn ascending_epsilons_are_rejected() {
        let text = DESK.replace("[0.4, 0.3]", "[0.3, 0.4]");
        assert!(RunConfig::from_toml(&text).is_err());
    }
}
