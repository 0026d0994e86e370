//! Online shortest-path routing on dynamic networks.
//!
//! The engine plays online Frank-Wolfe over the shortest-path flow
//! polytope, using Dijkstra as its linear minimization oracle. Around it
//! sit a time-varying weight simulator, a replica sampler with normal
//! confidence intervals, a covariance check for averaged SGD on
//! quadratics, and an experiment runner that writes reproducible
//! CSV/JSON outputs.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision for the common cases.

pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod iasg;
pub mod linalg;
pub mod netgraph;
pub mod ofw;
pub mod sampler;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type WeightVector64 = netgraph::WeightVector<f64>;
pub type WeightVector32 = netgraph::WeightVector<f32>;
pub type PathPoint64 = netgraph::PathPoint<f64>;
pub type PathPoint32 = netgraph::PathPoint<f32>;
pub type OfwState64 = ofw::OfwState<f64>;
pub type OfwState32 = ofw::OfwState<f32>;
pub type RegretReport64 = ofw::RegretReport<f64>;
pub type ConfidenceInterval64 = sampler::ConfidenceInterval<f64>;
pub type QuadraticProblem64 = iasg::QuadraticProblem<f64>;
pub type Matrix64 = linalg::Matrix<f64>;
pub type ExperimentConfig64 = experiment::ExperimentConfig<f64>;
pub type ExperimentReport64 = experiment::ExperimentReport<f64>;
