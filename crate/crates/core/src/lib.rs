//! Outlier-robust estimation of the 1-Wasserstein distance with
//! median-of-means and median-of-U-statistics blocks, a weight-clipped
//! critic trained by median-block gradient ascent, an exact transport
//! solver used as a reference, and a toy MoMWGAN.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common case.

pub mod blocking;
pub mod critic;
pub mod data;
pub mod error;
pub mod estimators;
pub mod exact_ot;
pub mod experiments;
pub mod gan;
pub mod mlp;
pub mod optim;
pub mod rng;
pub mod scalar;

pub use blocking::{recommended_k, BlockAssignment, BlockScheme, PairAssignment, PairScheme};
pub use critic::CriticNet;
pub use data::{Dataset, Sample};
pub use error::{Error, Result};
pub use estimators::{EstimatorKind, EstimatorSpec};
pub use exact_ot::exact_w1;
pub use gan::{GanConfig, Generator};
pub use optim::{RunReport, TrainConfig};
pub use scalar::Real;

pub type Sample64 = data::Sample<f64>;
pub type Sample32 = data::Sample<f32>;
pub type CriticNet64 = critic::CriticNet<f64>;
pub type CriticNet32 = critic::CriticNet<f32>;
pub type RunReport64 = optim::RunReport<f64>;
pub type RunReport32 = optim::RunReport<f32>;
pub type Generator64 = gan::Generator<f64>;
pub type Generator32 = gan::Generator<f32>;
