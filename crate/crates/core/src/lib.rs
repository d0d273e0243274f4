//! Doubly robust and Bayesian estimators of an average treatment effect,
//! with a reproducible Monte Carlo harness and numerical self-checks.

pub mod data;
pub mod design;
pub mod error;
pub mod glm;
pub mod estimators;
pub mod numerics;
pub mod report;
pub mod selfcheck;
pub mod simulation;

pub use data::{CovariateSpec, CovariateTerm, Dataset, Scenario, Transform};
pub use error::{Error, Result};
pub use numerics::RngStream;
