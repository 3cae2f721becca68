#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Change-point labeling of price intervals, self-organizing maps and
//! fractional-weighted ranking of company fundamentals.

pub mod changepoint;
pub mod error;
pub mod featsel;
pub mod fwc;
pub mod grid;
pub mod ingest;
pub mod labeling;
pub mod pipeline;
pub mod scalar;
pub mod som;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type FeatureMatrix64 = featsel::FeatureMatrix<f64>;
pub type FeatureMatrix32 = featsel::FeatureMatrix<f32>;
pub type SomGrid64 = som::SomGrid<f64>;
pub type SomGrid32 = som::SomGrid<f32>;
pub type FwcMatrix64 = fwc::FwcMatrix<f64>;
