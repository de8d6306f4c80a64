//! Unit-cell geometry and the rescaled coefficient fields.
//!
//! Everything here lives on the fixed unit cell `Y = (0,1)^n` in the rescaled
//! coordinates `y = x / eps`. A cell carries `m` inclusions: an inner ball
//! `B_j` of radius `r - delta` wrapped by a thin shell `G_j` with outer radius
//! `r`. The remaining part of the cell is the bulk `F`.
//!
//! After rescaling the conductivity is `eps^-2` in the bulk and inside the
//! balls, and `a_j * eps^(gamma - 1)` in the shell, whose thickness is
//! `delta = eps^(gamma - 1)`. The areal conductance `shell_a / delta` is
//! therefore exactly `a_j` for every `eps`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::spectral_design::MediumCoefficients;

/// Ball positions and radius on the unit cell.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitCellGeometry {
    n: usize,
    r: f64,
    centers: Vec<Vec<f64>>,
}

impl UnitCellGeometry {
    /// Builds a geometry and checks it with [`validate_geometry`].
    pub fn new(n: usize, r: f64, centers: Vec<Vec<f64>>) -> Result<Self> {
        let geom = Self { n, r, centers };
        validate_geometry(&geom)?;
        Ok(geom)
    }

    /// A cell without inclusions (constant medium).
    pub fn empty(n: usize) -> Result<Self> {
        Self::new(n, 0.0, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn inclusion_count(&self) -> usize {
        self.centers.len()
    }

    /// `|B_j|`, the volume of a ball of radius `r`.
    pub fn ball_volume(&self) -> f64 {
        ball_volume(self.n, self.r)
    }

    /// `|dB_j|`, the surface measure of a sphere of radius `r`.
    pub fn sphere_area(&self) -> f64 {
        sphere_area(self.n, self.r)
    }

    /// `|F| = 1 - sum_j |B_j|`.
    pub fn free_volume(&self) -> f64 {
        1.0 - self.inclusion_count() as f64 * self.ball_volume()
    }

    /// Distance to the nearest center together with its index.
    pub fn nearest_center(&self, y: &[f64]) -> Option<(usize, f64)> {
        self.centers
            .iter()
            .enumerate()
            .map(|(j, c)| (j, distance(c, y)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Same geometry with one inclusion kept (used by the radial checks).
    pub fn single(&self, index: usize) -> Result<Self> {
        let center = self
            .centers
            .get(index)
            .ok_or_else(|| Error::Geometry(format!("no inclusion with index {index}")))?;
        Self::new(self.n, self.r, vec![center.clone()])
    }
}

/// Volume of an `n`-ball of the given radius (n = 2 or 3).
pub fn ball_volume(n: usize, radius: f64) -> f64 {
    match n {
        2 => PI * radius * radius,
        3 => 4.0 / 3.0 * PI * radius.powi(3),
        _ => f64::NAN,
    }
}

/// Surface measure of the `(n-1)`-sphere of the given radius (n = 2 or 3).
pub fn sphere_area(n: usize, radius: f64) -> f64 {
    match n {
        2 => 2.0 * PI * radius,
        3 => 4.0 * PI * radius * radius,
        _ => f64::NAN,
    }
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Checks that the closed balls are pairwise disjoint and sit inside the open
/// cube, and returns `kappa`, half the smallest distance from a ball to the
/// cube boundary or to another ball. A cell without inclusions has
/// `kappa = +inf`.
pub fn validate_geometry(geom: &UnitCellGeometry) -> Result<f64> {
    if geom.n != 2 && geom.n != 3 {
        return Err(Error::Geometry(format!(
            "dimension must be 2 or 3, got {}",
            geom.n
        )));
    }
    if geom.centers.is_empty() {
        return Ok(f64::INFINITY);
    }
    if !(geom.r > 0.0) || !geom.r.is_finite() {
        return Err(Error::Geometry(format!(
            "radius must be positive, got {}",
            geom.r
        )));
    }
    let mut min_gap = f64::INFINITY;
    for (j, c) in geom.centers.iter().enumerate() {
        if c.len() != geom.n {
            return Err(Error::Geometry(format!(
                "center {j} has {} coordinates, expected {}",
                c.len(),
                geom.n
            )));
        }
        for (d, &x) in c.iter().enumerate() {
            let wall = x.min(1.0 - x) - geom.r;
            if !(wall > 0.0) {
                return Err(Error::Geometry(format!(
                    "ball {j} leaves the open unit cube along axis {d} (center {x}, r {})",
                    geom.r
                )));
            }
            min_gap = min_gap.min(wall);
        }
        for (k, other) in geom.centers.iter().enumerate().skip(j + 1) {
            let gap = distance(c, other) - 2.0 * geom.r;
            if !(gap > 0.0) {
                return Err(Error::Geometry(format!(
                    "balls {j} and {k} overlap or touch"
                )));
            }
            min_gap = min_gap.min(gap);
        }
    }
    Ok(0.5 * min_gap)
}

/// Which part of the cell a point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Bulk,
    Shell(usize),
    Inclusion(usize),
}

/// Geometry plus designed coefficients at a fixed scale `eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicMedium {
    geom: UnitCellGeometry,
    coeffs: MediumCoefficients,
    epsilon: f64,
    delta: f64,
    bulk_a: f64,
    shell_a: Vec<f64>,
}

impl PeriodicMedium {
    pub fn new(geom: UnitCellGeometry, coeffs: MediumCoefficients, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Geometry(format!(
                "epsilon must lie in (0, 1), got {epsilon}"
            )));
        }
        if coeffs.len() != geom.inclusion_count() {
            return Err(Error::Coefficients(format!(
                "{} coefficient pairs for {} inclusions",
                coeffs.len(),
                geom.inclusion_count()
            )));
        }
        let exponent = coeffs.gamma() - 1.0;
        let delta = epsilon.powf(exponent);
        if geom.inclusion_count() > 0 && !(delta < geom.radius()) {
            return Err(Error::Geometry(format!(
                "shell thickness {delta} is not smaller than the radius {}",
                geom.radius()
            )));
        }
        let bulk_a = epsilon.powi(-2);
        let shell_a = coeffs.a().iter().map(|a| a * delta).collect();
        Ok(Self {
            geom,
            coeffs,
            epsilon,
            delta,
            bulk_a,
            shell_a,
        })
    }

    /// Constant medium: no inclusions, `a = eps^-2`, `b = 1`.
    pub fn homogeneous(n: usize, epsilon: f64) -> Result<Self> {
        Self::new(
            UnitCellGeometry::empty(n)?,
            MediumCoefficients::new(Vec::new(), Vec::new(), 3.5)?,
            epsilon,
        )
    }

    pub fn geometry(&self) -> &UnitCellGeometry {
        &self.geom
    }

    pub fn coefficients(&self) -> &MediumCoefficients {
        &self.coeffs
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Rescaled shell thickness `eps^(gamma - 1)`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn bulk_a(&self) -> f64 {
        self.bulk_a
    }

    pub fn shell_a(&self) -> &[f64] {
        &self.shell_a
    }

    pub fn dim(&self) -> usize {
        self.geom.dim()
    }

    /// Region of `y` using the exact shell thickness `delta`.
    pub fn classify_point(&self, y: &[f64]) -> Region {
        classify_with_thickness(&self.geom, y, self.delta)
    }

    pub fn eval_a(&self, y: &[f64]) -> f64 {
        match self.classify_point(y) {
            Region::Shell(j) => self.shell_a[j],
            _ => self.bulk_a,
        }
    }

    pub fn eval_b(&self, y: &[f64]) -> f64 {
        match self.classify_point(y) {
            Region::Bulk => 1.0,
            Region::Shell(j) | Region::Inclusion(j) => self.coeffs.b()[j],
        }
    }
}

/// Region lookup with an arbitrary shell thickness. `|y - x_j| = r - t` goes to
/// the inclusion, `|y - x_j| = r` to the shell.
pub(crate) fn classify_with_thickness(geom: &UnitCellGeometry, y: &[f64], thickness: f64) -> Region {
    match geom.nearest_center(y) {
        Some((j, d)) if d <= geom.radius() - thickness => Region::Inclusion(j),
        Some((j, d)) if d <= geom.radius() => Region::Shell(j),
        _ => Region::Bulk,
    }
}

/// Free-function form of [`PeriodicMedium::classify_point`].
pub fn classify_point(y: &[f64], medium: &PeriodicMedium) -> Region {
    medium.classify_point(y)
}

pub fn eval_a(y: &[f64], medium: &PeriodicMedium) -> f64 {
    medium.eval_a(y)
}

pub fn eval_b(y: &[f64], medium: &PeriodicMedium) -> f64 {
    medium.eval_b(y)
}
