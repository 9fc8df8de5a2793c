//! Variance-reduced stochastic optimization for the semi-supervised setting
//! where labels are scarce and model predictions are abundant.
//!
//! The crate provides SGD, SVRG, PPI-SVRG (random-iterate snapshots over a
//! fixed epoch length) and PPI-SVRG++ (epoch doubling with averaged
//! snapshots), prediction-powered point estimators with standard errors and
//! confidence intervals, rate/error-floor calculators, and a Monte Carlo
//! protocol for evaluating estimators across labeled fractions.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix the scalar to `f64`, which is what the CLI and the
//! acceptance suite use.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod harness;
pub mod inference;
pub mod losses;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod theory;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type SplitDataset = data::SplitDataset<f64>;
pub type LabeledRecord = data::LabeledRecord<f64>;
pub type UnlabeledRecord = data::UnlabeledRecord<f64>;
pub type SyntheticSpec = data::SyntheticSpec<f64>;
pub type LossModel = losses::LossModel<f64>;
pub type Calibration = losses::Calibration<f64>;
pub type OptConfig = optim::OptConfig<f64>;
pub type Trajectory = optim::Trajectory<f64>;
pub type RateConstants = theory::RateConstants<f64>;
pub type FloorEstimate = theory::FloorEstimate<f64>;
pub type EstimateReport = inference::EstimateReport<f64>;
pub type ProtocolConfig = harness::ProtocolConfig<f64>;
pub type MonteCarloReport = harness::MonteCarloReport<f64>;
