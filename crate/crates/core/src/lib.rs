//! Adaptively preconditioned stochastic gradient Langevin dynamics (ASGLD),
//! its baseline optimizers, a problem suite and a reproducible experiment
//! harness.
//!
//! The math, optimizer and problem layers are generic over [`Real`] (`f32` or
//! `f64`). The aliases below fix the scalar to `f64`, which is what the
//! harness and the command line use.

pub mod error;
pub mod harness;
pub mod math;
pub mod optim;
pub mod plot;
pub mod problems;
pub mod scalar;

pub use error::{Error, Result};
pub use math::{axpy, elementwise_mul, sample_gaussian, GaussianStream, Vector};
pub use optim::{HyperParamsBuilder, Method};
pub use problems::{Batch, Partition, Problem};
pub use scalar::Real;

pub type ParamVector = math::Vector<f64>;
pub type HyperParams = optim::HyperParams<f64>;
pub type OptimizerState = optim::OptimizerState<f64>;
pub type StepReport = optim::StepReport<f64>;
pub type Dataset = problems::Dataset<f64>;
