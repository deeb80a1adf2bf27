//! Uncertainty-aware skeleton motion prediction.
//!
//! A trajectory-space predictor whose final layer emits per-coordinate
//! Gaussian parameters `(mean, variance)` instead of bare coordinates,
//! trained with a Gaussian negative-log-likelihood objective plus an
//! uncertainty-penalized coordinate-error term, with evaluation and
//! visualization of the predicted uncertainty.
//!
//! Modules follow the pipeline: [`skeleton_data`] loads, windows, and
//! synthesizes pose sequences; [`predictor`] maps an observed window to
//! Gaussian future poses; [`losses`] scores predictions and provides exact
//! analytic gradients; [`trainer`] runs Adam over those gradients;
//! [`evaluation`] produces horizon tables, calibration statistics, and the
//! uncertainty artifacts.
//!
//! All numeric code is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix the shipping precision used by the CLI and the file
//! formats.

pub mod checkpoint;
pub mod error;
pub mod evaluation;
pub mod losses;
pub mod mat;
pub mod predictor;
pub mod scalar;
pub mod skeleton_data;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Real;

/// Scalar used by the CLI and all on-disk formats.
pub type Scalar = f64;

pub type PoseSequence = skeleton_data::PoseSequence<Scalar>;
pub type SamplePair = skeleton_data::SamplePair<Scalar>;
pub type GaussianPoseSequence = losses::GaussianPoseSequence<Scalar>;
pub type LossBreakdown = losses::LossBreakdown<Scalar>;
pub type ModelParams = predictor::ModelParams<Scalar>;
pub type ModelCheckpoint = trainer::ModelCheckpoint<Scalar>;
pub type TrainResult = trainer::TrainResult<Scalar>;
pub type UncertaintyMap = evaluation::UncertaintyMap<Scalar>;
