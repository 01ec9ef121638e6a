//! Segmented regression: fit `k`-piecewise linear functions to fixed-design
//! data with the exact dynamic program or the fast greedy-merging estimators.

pub mod bench;
pub mod cli;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod merging;
pub mod model;
pub mod synth;

pub use error::{Error, Result};
pub use model::{
    mse, predict, sse_against_responses, DataSet, FitReport, Partition, PiecewiseLinearModel,
};
