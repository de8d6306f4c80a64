#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod band_analysis;
pub mod discretization;
pub mod eigensolver;
pub mod error;
pub mod geometry;
pub mod homogenization;
pub mod sparse;
pub mod spectral_design;

pub use error::{Error, Result};
