//! Off-policy value estimation for continuous actions via adaptive
//! action-space discretization.
//!
//! The pipeline: split the data into folds; on each training complement,
//! fit per-interval outcome regressions over a grid of candidate action
//! intervals, select a penalized optimal partition of `[0, 1]` by dynamic
//! programming, fit per-interval propensity models, and combine the folds
//! into a cross-fitted doubly-robust value estimate. A kernel-smoothed
//! doubly-robust baseline, synthetic benchmark scenarios, and a
//! calibration simulator round out the toolkit.
//!
//! All numerics are generic over [`Scalar`] (`f32`/`f64`); the aliases
//! below fix `f64` for typical use.

pub mod config;
pub mod cost;
pub mod csvio;
pub mod dataset;
pub mod error;
pub mod estimator;
pub mod kernel;
pub mod partitioner;
pub mod regressor;
pub mod scalar;
pub mod seeding;
pub mod synthetic;

pub use config::{EstimatorVariant, EvalConfig, GammaSpec, MlpSpec, PartitionerKind};
pub use dataset::{changepoint_hausdorff, ActionScale, Dataset, Interval, Partition, Policy};
pub use error::{DjqeError, Result};
pub use scalar::Scalar;

/// `f64` aliases for the common case.
pub type DatasetF64 = Dataset<f64>;
pub type PolicyF64 = Policy<f64>;
pub type EvalConfigF64 = EvalConfig<f64>;
pub type MlpSpecF64 = MlpSpec<f64>;
