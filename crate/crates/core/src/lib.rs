//! Zeroth-order optimization when the sampling distribution depends on the
//! decision.
//!
//! An [`Environment`] exposes draws `ξ ~ D(x)` and a loss `f(x, ξ)`; the
//! optimizers in [`optimizers`] only see those two calls, and every draw is
//! charged to the [`EnvHandle`] ledger.

pub mod env;
pub mod error;
pub mod estimators;
pub mod optimizers;
pub mod oracles;
pub mod pricing;
pub mod rng;
pub mod variance_reduction;

pub use env::{register_env, DecisionVector, EnvHandle, Environment, SampleBatch, SampleLedger};
pub use error::{Error, Result};
pub use estimators::{EstimatorKind, EstimatorSample, SmoothingState};
pub use optimizers::{
    run, run_probed, IterTrace, Method, MetricProbe, RunConfig, RunReport, StopReason,
};
pub use rng::{split_rng, DrawStreams};
