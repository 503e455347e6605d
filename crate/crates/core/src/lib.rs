//! Desk-scale laboratory for ensemble-driven back-translation.

pub mod corpus;
pub mod decoding;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Single-precision model used for training and decoding.
pub type Model = model::Transformer<f32>;
/// Double-precision model used for gradient verification.
pub type Model64 = model::Transformer<f64>;
pub type Optimizer = model::OptimizerState<f32>;
