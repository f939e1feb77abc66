//! Offset tracking for the one-point estimator.
//!
//! The offset `c_{k+1}` estimates `F(x_{k+1})` by re-evaluating `f(x_{k+1}, ·)`
//! on outcomes already drawn at recent probe points, so it costs oracle calls
//! but no new samples. Entry `i` gets weight `a_i ∝ 1/b_i` with
//! `b_i = M‖x_{k+1} - probe_i‖² + 1/m_i`, the minimizer of `Σ b_i a_i²` on
//! the probability simplex.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{running_mean, DecisionVector, EnvHandle, Environment, SampleBatch};
use crate::error::{Error, Result};

/// FIFO window of recent `(probe, batch)` pairs. The probe of an entry is the
/// batch's own recorded probe `x_i + μ_i u_i`.
#[derive(Debug, Clone)]
pub struct HistoryWindow<O> {
    entries: VecDeque<SampleBatch<O>>,
    capacity: usize,
}

impl<O> HistoryWindow<O> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity < 1 {
            return Err(Error::InvalidArgument("history capacity must be at least 1".into()));
        }
        Ok(Self {
            entries: VecDeque::with_capacity(capacity),
            capacity,
        })
    }

    pub fn push(&mut self, batch: SampleBatch<O>) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(batch);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Oldest first.
    pub fn entries(&self) -> impl Iterator<Item = &SampleBatch<O>> {
        self.entries.iter()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightScheme {
    #[default]
    Optimal,
    /// Ablation: `a_i = 1/s`.
    Uniform,
}

/// Closed-form minimizer of `Σ b_i a_i²` over the simplex.
pub fn optimal_weights(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::EmptyHistory);
    }
    if scores.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
        return Err(Error::InvalidArgument("scores must be finite and positive".into()));
    }
    let inv: Vec<f64> = scores.iter().map(|b| 1.0 / b).collect();
    let total: f64 = inv.iter().sum();
    Ok(inv.into_iter().map(|v| v / total).collect())
}

pub fn compute_weights<O>(
    history: &HistoryWindow<O>,
    x_next: &DecisionVector,
    distance_weight: f64,
) -> Result<WeightVector> {
    compute_weights_with(history, x_next, distance_weight, WeightScheme::Optimal)
}

pub fn compute_weights_with<O>(
    history: &HistoryWindow<O>,
    x_next: &DecisionVector,
    distance_weight: f64,
    scheme: WeightScheme,
) -> Result<WeightVector> {
    if history.is_empty() {
        return Err(Error::EmptyHistory);
    }
    if !(distance_weight >= 0.0 && distance_weight.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "distance weight M must be finite and >= 0, got {distance_weight}"
        )));
    }
    let b: Vec<f64> = history
        .entries()
        .map(|batch| {
            distance_weight * x_next.distance_sq(batch.probe()) + 1.0 / batch.batch_size() as f64
        })
        .collect();
    let a = match scheme {
        WeightScheme::Optimal => optimal_weights(&b)?,
        WeightScheme::Uniform => vec![1.0 / b.len() as f64; b.len()],
    };
    Ok(WeightVector { a, b })
}

/// `Σ_i (a_i/m_i) Σ_j f(x_next, ξ_i^j)` over stored outcomes only.
pub fn compute_c<E: Environment>(
    history: &HistoryWindow<E::Outcome>,
    weights: &WeightVector,
    x_next: &DecisionVector,
    env: &EnvHandle<E>,
) -> Result<f64> {
    if weights.a.len() != history.len() {
        return Err(Error::LengthMismatch {
            weights: weights.a.len(),
            history: history.len(),
        });
    }
    Ok(history
        .entries()
        .zip(&weights.a)
        .map(|(batch, a)| {
            a * running_mean(batch.outcomes().iter().map(|xi| env.eval_f(x_next, xi)))
        })
        .sum())
}

/// Mean of `f(x0, ξ)` over `j_max` fresh draws at `x0`.
pub fn estimate_initial_c<E: Environment, R: Rng + ?Sized>(
    env: &mut EnvHandle<E>,
    x0: &DecisionVector,
    j_max: usize,
    rng: &mut R,
) -> Result<f64> {
    if j_max < 1 {
        return Err(Error::InvalidArgument("j_max must be at least 1".into()));
    }
    env.mean_objective(x0, j_max, rng)
}
