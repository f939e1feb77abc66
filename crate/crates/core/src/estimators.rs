//! Gaussian-smoothing gradient estimators.
//!
//! Both estimators draw one perturbation `u ~ N(0, I_d)` per call and share it
//! across the whole mini-batch.
//!
//! * one-point: `g = (1/m) Σ_j (f(x+μu, ξʲ) - c)/μ · u`, `ξʲ ~ D(x+μu)`
//! * two-point: `g = (1/m) Σ_j (f(x+μu, ξ¹ʲ) - f(x-μu, ξ²ʲ))/(2μ) · u`
//!
//! Both are unbiased for `∇F_μ(x)`; the offset `c` only moves the variance.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::env::{running_mean, DecisionVector, EnvHandle, Environment, SampleBatch};
use crate::error::{Error, Result};
use crate::oracles::McEstimate;
use crate::rng::DrawStreams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingState {
    mu: f64,
    c: f64,
}

impl SmoothingState {
    /// `mu` must be a positive normal float; subnormal radii are refused.
    pub fn new(mu: f64, c: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_normal()) {
            return Err(Error::SmoothingTooSmall { mu });
        }
        if !c.is_finite() {
            return Err(Error::InvalidArgument(format!("offset c must be finite, got {c}")));
        }
        Ok(Self { mu, c })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn c(&self) -> f64 {
        self.c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    OnePoint,
    TwoPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorBatches<O> {
    OnePoint(SampleBatch<O>),
    TwoPoint {
        plus: SampleBatch<O>,
        minus: SampleBatch<O>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSample<O> {
    pub g: Vec<f64>,
    pub u: Vec<f64>,
    pub mu: f64,
    pub batches: EstimatorBatches<O>,
}

impl<O> EstimatorSample<O> {
    pub fn kind(&self) -> EstimatorKind {
        match self.batches {
            EstimatorBatches::OnePoint(_) => EstimatorKind::OnePoint,
            EstimatorBatches::TwoPoint { .. } => EstimatorKind::TwoPoint,
        }
    }

    pub fn grad_norm_sq(&self) -> f64 {
        self.g.iter().map(|v| v * v).sum()
    }

    /// The batch drawn at `x + μu`.
    pub fn into_plus_batch(self) -> SampleBatch<O> {
        match self.batches {
            EstimatorBatches::OnePoint(b) => b,
            EstimatorBatches::TwoPoint { plus, .. } => plus,
        }
    }
}

fn draw_direction<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn scaled_direction(scale: f64, u: &[f64]) -> Result<Vec<f64>> {
    let g: Vec<f64> = u.iter().map(|ui| scale * ui).collect();
    if let Some(index) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEstimate { index });
    }
    Ok(g)
}

fn check_batch_size(m: usize) -> Result<()> {
    if m < 1 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    Ok(())
}

pub fn one_point_estimate<E: Environment>(
    env: &mut EnvHandle<E>,
    x: &DecisionVector,
    state: SmoothingState,
    m: usize,
    streams: &mut DrawStreams,
) -> Result<EstimatorSample<E::Outcome>> {
    check_batch_size(m)?;
    env.check_dim(x)?;
    let u = draw_direction(x.dim(), &mut streams.perturbation);
    one_point_along(env, x, state, m, u, &mut streams.outcomes)
}

pub(crate) fn one_point_along<E: Environment, R: Rng + ?Sized>(
    env: &mut EnvHandle<E>,
    x: &DecisionVector,
    state: SmoothingState,
    m: usize,
    u: Vec<f64>,
    rng: &mut R,
) -> Result<EstimatorSample<E::Outcome>> {
    let probe = x.offset(&u, state.mu)?;
    let batch = env.sample(&probe, m, rng)?;
    let mean_gap = running_mean(
        batch
            .outcomes()
            .iter()
            .map(|xi| env.eval_f(&probe, xi) - state.c),
    );
    let g = scaled_direction(mean_gap / state.mu, &u)?;
    Ok(EstimatorSample {
        g,
        u,
        mu: state.mu,
        batches: EstimatorBatches::OnePoint(batch),
    })
}

/// `state.c` is ignored.
pub fn two_point_estimate<E: Environment>(
    env: &mut EnvHandle<E>,
    x: &DecisionVector,
    state: SmoothingState,
    m: usize,
    streams: &mut DrawStreams,
) -> Result<EstimatorSample<E::Outcome>> {
    check_batch_size(m)?;
    env.check_dim(x)?;
    let u = draw_direction(x.dim(), &mut streams.perturbation);
    two_point_along(env, x, state, m, u, &mut streams.outcomes)
}

pub(crate) fn two_point_along<E: Environment, R: Rng + ?Sized>(
    env: &mut EnvHandle<E>,
    x: &DecisionVector,
    state: SmoothingState,
    m: usize,
    u: Vec<f64>,
    rng: &mut R,
) -> Result<EstimatorSample<E::Outcome>> {
    let plus_probe = x.offset(&u, state.mu)?;
    let minus_probe = x.offset(&u, -state.mu)?;
    let plus = env.sample(&plus_probe, m, rng)?;
    let minus = env.sample(&minus_probe, m, rng)?;
    let mean_diff = running_mean(plus.outcomes().iter().zip(minus.outcomes()).map(|(a, b)| {
        env.eval_f(&plus_probe, a) - env.eval_f(&minus_probe, b)
    }));
    let g = scaled_direction(mean_diff / (2.0 * state.mu), &u)?;
    Ok(EstimatorSample {
        g,
        u,
        mu: state.mu,
        batches: EstimatorBatches::TwoPoint { plus, minus },
    })
}

pub fn estimate<E: Environment>(
    kind: EstimatorKind,
    env: &mut EnvHandle<E>,
    x: &DecisionVector,
    state: SmoothingState,
    m: usize,
    streams: &mut DrawStreams,
) -> Result<EstimatorSample<E::Outcome>> {
    match kind {
        EstimatorKind::OnePoint => one_point_estimate(env, x, state, m, streams),
        EstimatorKind::TwoPoint => two_point_estimate(env, x, state, m, streams),
    }
}

/// Empirical `E‖g‖²` over `n_trials` independent estimates, with its standard error.
pub fn second_moment_estimate<E: Environment>(
    kind: EstimatorKind,
    env: &mut EnvHandle<E>,
    x: &DecisionVector,
    state: SmoothingState,
    m: usize,
    n_trials: usize,
    streams: &mut DrawStreams,
) -> Result<McEstimate> {
    if n_trials < 1 {
        return Err(Error::InvalidArgument("n_trials must be at least 1".into()));
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..n_trials {
        let v = estimate(kind, env, x, state, m, streams)?.grad_norm_sq();
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    let std_err = if n_trials > 1 {
        (m2 / (n_trials - 1) as f64 / n_trials as f64).sqrt()
    } else {
        f64::NAN
    };
    Ok(McEstimate {
        mean,
        std_err,
        n: n_trials,
    })
}

pub fn second_moment<E: Environment>(
    kind: EstimatorKind,
    env: &mut EnvHandle<E>,
    x: &DecisionVector,
    state: SmoothingState,
    m: usize,
    n_trials: usize,
    streams: &mut DrawStreams,
) -> Result<f64> {
    second_moment_estimate(kind, env, x, state, m, n_trials, streams).map(|e| e.mean)
}
