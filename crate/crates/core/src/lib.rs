//! Learning effective independent cascade (IC) models from partially observed
//! activation times with dynamic message passing (DMP).
//!
//! The numerical modules are generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix the precision used by the CLI and the tests.

pub mod baselines;
pub mod cascades;
pub mod dmp;
pub mod error;
pub mod graph;
pub mod metrics;
mod products;
pub mod replicas;
pub mod scalar;
pub mod seeding;
pub mod slicer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type EdgeParams64 = graph::EdgeParams<f64>;
pub type EdgeParams32 = graph::EdgeParams<f32>;
pub type DmpState64 = dmp::DmpState<f64>;
pub type DmpState32 = dmp::DmpState<f32>;
pub type AdjointState64 = slicer::AdjointState<f64>;
pub type LearnOutcome64 = slicer::LearnOutcome<f64>;
pub type ReplicaModel64 = replicas::ReplicaModel<f64>;
pub type MixtureState64 = replicas::MixtureState<f64>;
