use thiserror::Error;

use crate::penalty::PlsSolution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("column {0} has zero variance")]
    ConstantColumn(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid index set: {0}")]
    InvalidIndexSet(String),
    #[error("invalid penalty: {0}")]
    InvalidPenalty(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid rate constants: {0}")]
    InvalidRates(String),

    #[error("column {0} is already in the active set")]
    IndexActive(usize),
    #[error("column {0} is numerically collinear with the active set")]
    NearCollinear(usize),
    #[error("columns {0:?} make the design rank deficient")]
    RankDeficient(Vec<usize>),
    #[error("requested set is not a subset of the active set")]
    NotSubset,
    #[error("no remaining column passes the rank guard")]
    NoEligibleColumns,
    #[error("penalized solver did not converge after {} iterations", .0.iterations)]
    NotConverged(Box<PlsSolution>),

    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("infeasible construction: {0}")]
    InfeasibleConstruction(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    ParseError {
        line: u64,
        column: usize,
        message: String,
    },
    #[error("non-numeric cell {value:?} at line {line}, column {column}")]
    NonNumericCell {
        line: u64,
        column: usize,
        value: String,
    },
    #[error("input contains no data rows")]
    EmptyFile,
    #[error("response column {0:?} not found")]
    ResponseColumnMissing(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures that originate in the numerics rather than in the
    /// inputs or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NearCollinear(_)
                | Error::RankDeficient(_)
                | Error::NoEligibleColumns
                | Error::NotConverged(_)
                | Error::NotPositiveDefinite
        )
    }
}
