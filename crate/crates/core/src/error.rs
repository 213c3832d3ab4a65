//! Error type shared across the crate.
//!
//! The variants are coarse on purpose: callers (the CLI in particular) only
//! need to tell apart "the inputs or configuration are bad" from "a fit did
//! not converge", and everything else rides along with context in the
//! message.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input file does not have the shape we need (missing column, bad
    /// header, wrong delimiter). Fatal for the whole file, unlike per-row
    /// rejections which are collected and reported.
    #[error("schema error: {0}")]
    Schema(String),

    /// Invalid configuration or arguments (bad bounds, unknown level,
    /// incompatible region granularity, missing base label).
    #[error("configuration error: {0}")]
    Config(String),

    /// Data fails a precondition that cannot be repaired row-wise
    /// (empty input where content is required, unknown state in an exposure
    /// table, too few observations).
    #[error("data error: {0}")]
    Data(String),

    /// A quantity is outside the mathematical domain of the operation
    /// (non-positive dispersion, zero-amplitude cycle, undefined ratio).
    #[error("domain error: {0}")]
    Domain(String),

    /// Design matrix cannot be used as-is; names the offending columns.
    #[error("design error: {0}")]
    Design(String),

    /// An iterative fit ran out of iterations before meeting its tolerances.
    #[error("no convergence after {iterations} iterations: {detail}")]
    NoConvergence { iterations: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.kind() {
            csv::ErrorKind::Io(_) => Error::Data(format!("i/o failure on delimited file: {e}")),
            _ => Error::Data(format!("malformed delimited data: {e}")),
        }
    }
}

impl Error {
    /// True for the only failure class that is not an input/data problem.
    /// The CLI maps this to its own exit status.
    pub fn is_convergence_failure(&self) -> bool {
        matches!(self, Error::NoConvergence { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
