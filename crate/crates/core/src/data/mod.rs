//! Balanced longitudinal datasets, link functions and working-correlation
//! basis matrices, plus CSV ingestion and simulation.

mod basis;
mod dataset;
mod link;
mod simulate;

pub use basis::{make_basis, BasisKind, CorrelationBasis};
pub use dataset::{load_dataset, write_dataset, CsvSchema, LongitudinalDataset};
pub use link::LinkFunction;
pub use simulate::{simulate_dataset, CorrelationSpec, CovariateSpec, SimulationSpec};

use thiserror::Error;

/// Errors raised while constructing, loading or simulating datasets.
#[derive(Debug, Error)]
pub enum DataError {
    /// A subject does not have exactly `n` observations.
    #[error("unbalanced design: subject {subject} has {found} observations, expected {expected}")]
    Balance {
        subject: String,
        found: usize,
        expected: usize,
    },
    /// A cell could not be parsed as a number, or a required column is missing.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    /// The same (subject, time) pair appears twice.
    #[error("duplicate observation for subject {subject} at time {time}")]
    Duplicate { subject: String, time: String },
    /// A requested correlation matrix is not positive definite.
    #[error("requested correlation is not positive definite: {0}")]
    Covariance(String),
    /// Dimensions are inconsistent or out of the supported range.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// A value is NaN or infinite where a finite number is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
