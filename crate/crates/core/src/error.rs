use thiserror::Error;

use crate::model::Slot;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what} {value} outside range {range}")]
    Range { what: &'static str, value: String, range: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("missing weather for slot {0}")]
    MissingWeather(Slot),

    #[error("degenerate similarity: centered feature vector norm {norm:e} below 1e-12")]
    DegenerateSimilarity { norm: f64 },

    #[error("degenerate graph: node {node} has degree {degree:e}")]
    DegenerateGraph { node: usize, degree: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("fixed-point iteration did not converge in {iterations} iterations (last step {last_step:e})")]
    NonConvergence { iterations: usize, last_step: f64 },

    #[error("training diverged at epoch {epoch} (loss {loss}); try a smaller learning rate")]
    Training { epoch: usize, loss: f64 },

    #[error("cannot bootstrap: {0}")]
    Bootstrap(String),

    #[error("internal consistency: {0}")]
    Consistency(String),

    #[error("snapshot: {0}")]
    Snapshot(String),
}

/// Coarse grouping used by front-ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Range { .. } | Error::Contract(_) | Error::Config(_) => ErrorClass::Usage,
            Error::MissingData(_)
            | Error::MissingWeather(_)
            | Error::Bootstrap(_)
            | Error::Consistency(_)
            | Error::Snapshot(_) => ErrorClass::Data,
            Error::DegenerateSimilarity { .. }
            | Error::DegenerateGraph { .. }
            | Error::Numerical(_)
            | Error::NonConvergence { .. }
            | Error::Training { .. } => ErrorClass::Numerical,
        }
    }

    pub(crate) fn range(what: &'static str, value: impl ToString, range: impl ToString) -> Self {
        Error::Range { what, value: value.to_string(), range: range.to_string() }
    }
}
