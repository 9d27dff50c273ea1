//! Iterative screening and selection for high-dimensional linear models.
//!
//! A run alternates a screening step, which ranks unused predictors by a
//! statistic computed after projecting out the current model, and a
//! selection step, which decides which screened predictors to keep. The
//! projection is kept as an incrementally updated Cholesky factor; the
//! [`oracle`] module holds slow dense reference implementations used to
//! check it.

pub mod cli;
pub mod criteria;
pub mod error;
pub mod io;
pub mod model;
pub mod oracle;
pub mod penalty;
pub mod pipeline;
pub mod projection;
pub mod report;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
pub use model::{
    AlgorithmConfig, Dataset, IndexSet, IterationRecord, PenaltyKind, PenaltySpec, RateConstants, ScreenSizes,
    ScreeningCriterion, SelectionCriterion, StopReason, Trajectory, TrueModel,
};
pub use pipeline::{run, Preset, SuccessMode};
pub use projection::ActiveSetState;
