use thiserror::Error;

/// Errors raised anywhere in the design and verification pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A target-interval or window constraint is violated. `field` names the offending entry.
    #[error("invalid gap specification ({field}): {reason}")]
    Precondition { field: String, reason: String },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid medium coefficients: {0}")]
    Coefficients(String),

    #[error("degenerate spectrum: sigma[{i}] = {value_i} and sigma[{j}] = {value_j} coincide")]
    Degenerate {
        i: usize,
        j: usize,
        value_i: f64,
        value_j: f64,
    },

    #[error("lambda = {lambda} lies within the pole tolerance of sigma[{index}] = {sigma}")]
    Pole { lambda: f64, index: usize, sigma: f64 },

    #[error("window L = {window} must exceed the last upper gap edge {mu_max}")]
    Window { window: f64, mu_max: f64 },

    #[error("grid resolution: {0}")]
    Resolution(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("eigensolver did not converge after {iterations} iterations (worst residual {worst_residual:e})")]
    NoConvergence {
        iterations: usize,
        worst_residual: f64,
        residuals: Vec<f64>,
    },

    #[error("eigensolver failed at theta index {theta:?}: {source}")]
    AtTheta {
        theta: Vec<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("window [0, {window}] not resolved: band {bands} starts at {band_min} <= L; increase the band count")]
    InsufficientBands {
        bands: usize,
        band_min: f64,
        window: f64,
    },

    #[error("dimension {0} too large for the dense oracle")]
    TooLarge(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn precondition(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Precondition {
        field: field.into(),
        reason: reason.into(),
    }
}
