//! Policy gradients with parameter-based exploration (PGPE).
//!
//! A Gaussian prior over the parameters of a deterministic linear controller
//! is learned by gradient ascent on the expected return. Besides the plain
//! on-policy estimator, the crate implements sample reuse across iterations
//! with and without importance weights, weight truncation, and the
//! variance-minimizing constant baseline, plus the tooling used to measure
//! estimator variance and bias and to check the closed-form variance bounds.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod environments;
pub mod error;
pub mod estimators;
pub mod gaussian_prior;
pub mod rng;
pub mod rollout;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use environments::{Env, Environment, MountainCar, ToyEnv};
pub use estimators::{BaselineMode, EstimatorConfig, GradientEstimate, Method, WeightMode};
pub use gaussian_prior::{HyperParams, PolicyParams, ScoreVector};
pub use rollout::{Dataset, ReuseWindow, SampleRecord, Trajectory};

pub type HyperParams64 = gaussian_prior::HyperParams<f64>;
pub type HyperParams32 = gaussian_prior::HyperParams<f32>;
pub type PolicyParams64 = gaussian_prior::PolicyParams<f64>;
pub type GradientEstimate64 = estimators::GradientEstimate<f64>;
pub type EstimatorConfig64 = estimators::EstimatorConfig<f64>;
pub type Dataset64 = rollout::Dataset<f64>;
pub type SampleRecord64 = rollout::SampleRecord<f64>;
pub type Env64 = environments::Env<f64>;
pub type ToyEnv64 = environments::ToyEnv<f64>;
pub type MountainCar64 = environments::MountainCar<f64>;
pub type TrainerConfig64 = trainer::TrainerConfig<f64>;
pub type TrainingHistory64 = trainer::TrainingHistory<f64>;
pub type GradientStudyConfig64 = analysis::GradientStudyConfig<f64>;
pub type GradientStudyResult64 = analysis::GradientStudyResult<f64>;
