//! Core library for dwellfit: loading and trimming staged housing-market
//! micro-data (adverts, brokered adverts, deeds), turning regime calendars
//! into split time labels, fitting a nested hierarchical price model and a
//! negative-binomial count model, deriving price/quantity indices and
//! correlation tests from the fits, and simulating synthetic markets with
//! known ground truth.
//!
//! Numeric kernels are generic over the scalar type via [`scalar::Scalar`];
//! the aliases at the crate root pin everything to `f64`, which is what the
//! CLI and the test suites use.

pub mod data;
pub mod design;
pub mod error;
pub mod fit;
pub mod hlm;
pub mod indices;
pub mod nb;
pub mod regime;
pub mod scalar;
pub mod sim;
pub mod special;
pub mod stats;
pub mod time;

pub use error::{Error, Result};

/// Default scalar used by the CLI and the simulator outputs.
pub type Real = f64;

/// `f64` fit of the hierarchical price model.
pub type HlmFit = hlm::HlmFit<Real>;
/// `f64` fit of the negative-binomial count model.
pub type NbFit = nb::NbFit<Real>;
/// `f64` seasonal cycle extracted from a count fit.
pub type CyclicalTrend = nb::CyclicalTrend<Real>;
/// `f64` index series (price, quantity, or segment-relative).
pub type IndexSeries = indices::IndexSeries<Real>;
/// `f64` Pearson correlation test result.
pub type CorrelationResult = stats::CorrelationResult<Real>;
