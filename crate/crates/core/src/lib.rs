//! Bayesian nonparametric bidirectional clustering of multi-platform omics
//! data with downstream variable selection for survival outcomes.

pub mod error;
pub mod io;
pub mod estimate;
pub mod mcmc;
pub mod model;
pub mod partition;
pub mod rng;
pub mod selection;
pub mod simulation;

pub use error::{Error, Result};
