//! Spiked-covariance single-index models trained by spherical online SGD.
//!
//! The crate is organised bottom-up:
//!
//! * [`gaussian`]: exact and numerical Gaussian expectations.
//! * [`model`]: the data model, activations and per-sample gradients.
//! * [`population`]: closed-form population loss, its 2-D flow and
//!   certification tools.
//! * [`pretraining`]: initializations (random, PCA, fixed overlap, transfer).
//! * [`sgd`]: the online spherical SGD loop.
//! * [`trajectory`]: recorded overlap time series shared by SGD and flows.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gaussian;
pub mod model;
pub mod population;
pub mod pretraining;
pub mod sgd;
pub mod trajectory;

pub use error::{Error, Result};
pub use gaussian::{GaussianPair, Polynomial, QuadratureGrid};
pub use model::{Activation, CorrelationState, Frame, ModelParams, Sample};
pub use population::PopulationField;
pub use pretraining::{InitSpec, PcaEstimate};
pub use sgd::{Outcome, RunResult, SgdConfig};
pub use trajectory::Trajectory;
