//! Incremental Gaussian mixture learning in a single pass.
//!
//! Two learners share one data model ([`model::Mixture`]):
//!
//! * [`reference`] keeps full covariance matrices and pays O(D^3) per
//!   component and point;
//! * [`fast`] keeps precision matrices and tracks determinants through
//!   rank-one updates, O(D^2) per component and point.
//!
//! Both produce the same model on the same stream. [`inference`] turns a
//! trained mixture into a regressor/classifier over any split of the
//! dimensions into known and unknown parts.

// `!(x > bound)` checks deliberately reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod fast;
pub mod inference;
pub mod model;
pub mod model_file;
pub mod numerics;
pub mod reference;
pub mod rl;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use inference::{Partition, Prediction};
pub use model::{GaussianComponent, LearnerConfig, Mixture, Representation, UpdateTrace};
