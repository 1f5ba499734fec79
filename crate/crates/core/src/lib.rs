//! Data-driven product development toolkit.
//!
//! * [`netcore`]: dense MLP with inverted dropout and exact gradients with
//!   respect to parameters and inputs.
//! * [`datakit`]: CSV ingestion, seeded splits, standardization, training.
//! * [`pgdsearch`]: masked, normalized, box-projected gradient descent over
//!   the surrogate's inputs, with multi-start.
//! * [`uq`]: prediction intervals from raw MC dropout, conformalized MC
//!   dropout, split conformal and conformalized quantile regression.
//! * [`evalbench`]: repeated-trial coverage / width benchmark.

// `!(a > b)` is used on purpose so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datakit;
pub mod error;
pub mod evalbench;
pub mod netcore;
pub mod pgdsearch;
pub mod seed;
pub mod uq;

pub use error::{Error, ErrorKind, Result};
