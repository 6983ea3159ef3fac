//! Sieve least-squares estimation and Wald inference for designed experiments
//! in which every subject answers the same set of stimuli.

pub mod basis;
pub mod covariance;
pub mod design;
pub mod error;
pub mod estimator;
pub mod inference;
pub mod linalg;
pub mod simulate;
pub mod special;

pub use error::{Result, SieveError};
