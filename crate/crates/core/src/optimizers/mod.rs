//! Optimization loops.
//!
//! Each iteration `k` draws a perturbation and a batch at the smoothed probe,
//! steps `x_{k+1} = x_k - β_k g_k`, and decays the radius
//! `μ_{k+1} = max(γ μ_k, μ_min)`. The variance-reduced one-point method also
//! refreshes its offset from the history window. A run stops before any
//! iteration whose draws would overshoot the sample budget, or after
//! `max_iters` iterations.

mod config;
mod theory;

pub use config::{BatchSchedule, BetaSchedule, Method, RunConfig};
pub use theory::{theory_beta, theory_params, TheoryConstants, TheoryParams, TheoryScale};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{DecisionVector, EnvHandle, Environment};
use crate::error::{Error, Result};
use crate::estimators::{one_point_estimate, two_point_estimate, SmoothingState};
use crate::rng::{split_rng, streams, DrawStreams};
use crate::variance_reduction::{
    compute_c, compute_weights_with, estimate_initial_c, HistoryWindow,
};

/// One row per iteration. `x`, `mu`, `c` and `beta` are the values used at
/// iteration `k`; `cumulative_draws` includes this iteration's batch and
/// `obj_probe` measures the post-update iterate `x_{k+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterTrace {
    pub k: usize,
    pub x: DecisionVector,
    pub mu: f64,
    /// `None` for the two-point method, which has no offset.
    pub c: Option<f64>,
    pub grad_norm_sq: f64,
    pub cumulative_draws: u64,
    pub beta: f64,
    pub batch_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obj_probe: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopReason {
    BudgetExhausted,
    MaxIters,
    Diverged { k: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub method: Method,
    pub trace: Vec<IterTrace>,
    pub x_final: DecisionVector,
    /// Iterate drawn uniformly from the visited `x_0 … x_T`.
    pub x_uniform: DecisionVector,
    pub stop: StopReason,
    pub total_draws: u64,
}

impl RunReport {
    pub fn diverged(&self) -> bool {
        matches!(self.stop, StopReason::Diverged { .. })
    }
}

/// Periodic objective measurement hook.
pub struct MetricProbe<'a> {
    /// Measure after iterations with `k % every == 0`; `0` disables probing.
    pub every: usize,
    pub measure: Box<dyn FnMut(&DecisionVector) -> Result<f64> + 'a>,
}

impl MetricProbe<'_> {
    fn maybe_measure(&mut self, k: usize, x: &DecisionVector) -> Result<Option<f64>> {
        if self.every > 0 && k % self.every == 0 {
            (self.measure)(x).map(Some)
        } else {
            Ok(None)
        }
    }
}

/// How the one-point loop sets its offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OffsetMode {
    Tracked,
    Fixed(f64),
}

pub fn run<E: Environment>(env: &mut EnvHandle<E>, cfg: &RunConfig) -> Result<RunReport> {
    run_probed(env, cfg, None)
}

pub fn run_probed<E: Environment>(
    env: &mut EnvHandle<E>,
    cfg: &RunConfig,
    probe: Option<&mut MetricProbe<'_>>,
) -> Result<RunReport> {
    match cfg.method {
        Method::Alg1 => one_point_loop(env, cfg, OffsetMode::Tracked, false, probe),
        Method::Alg2 => two_point_loop(env, cfg, probe),
        Method::Czo1 => one_point_loop(env, cfg, OffsetMode::Fixed(0.0), true, probe),
    }
}

fn expect_method(cfg: &RunConfig, requested: Method) -> Result<()> {
    if cfg.method != requested {
        return Err(Error::MethodMismatch {
            configured: cfg.method.name(),
            requested: requested.name(),
        });
    }
    Ok(())
}

pub fn run_alg1<E: Environment>(env: &mut EnvHandle<E>, cfg: &RunConfig) -> Result<RunReport> {
    expect_method(cfg, Method::Alg1)?;
    one_point_loop(env, cfg, OffsetMode::Tracked, false, None)
}

/// Variance-reduced one-point loop with an explicit offset mode; `Fixed`
/// skips history maintenance entirely.
pub fn run_alg1_with<E: Environment>(
    env: &mut EnvHandle<E>,
    cfg: &RunConfig,
    offset: OffsetMode,
    probe: Option<&mut MetricProbe<'_>>,
) -> Result<RunReport> {
    expect_method(cfg, Method::Alg1)?;
    one_point_loop(env, cfg, offset, false, probe)
}

pub fn run_alg2<E: Environment>(env: &mut EnvHandle<E>, cfg: &RunConfig) -> Result<RunReport> {
    expect_method(cfg, Method::Alg2)?;
    two_point_loop(env, cfg, None)
}

/// Offset frozen at zero, radius frozen at `cfg.mu0`, step from `cfg.beta`.
pub fn run_czo1<E: Environment>(env: &mut EnvHandle<E>, cfg: &RunConfig) -> Result<RunReport> {
    expect_method(cfg, Method::Czo1)?;
    one_point_loop(env, cfg, OffsetMode::Fixed(0.0), true, None)
}

struct LoopState {
    x: DecisionVector,
    mu: f64,
    trace: Vec<IterTrace>,
}

enum StepOutcome {
    Continue,
    Stop(StopReason),
}

/// Next iterate `x - β g`, or a divergence reason.
fn descend(x: &DecisionVector, g: &[f64], beta: f64) -> std::result::Result<DecisionVector, String> {
    x.offset(g, -beta)
        .map_err(|e| format!("iterate became non-finite: {e}"))
}

/// `Some(reason)` if the loop must stop before iteration `k`.
fn stop_before(cfg: &RunConfig, k: usize, draws: u64) -> Option<StopReason> {
    if k >= cfg.max_iters {
        return Some(StopReason::MaxIters);
    }
    let cost = cfg.batch.at(k) as u64 * cfg.method.draws_per_batch_unit();
    if draws.saturating_add(cost) > cfg.sample_budget {
        return Some(StopReason::BudgetExhausted);
    }
    None
}

fn finish<E: Environment>(
    env: &EnvHandle<E>,
    cfg: &RunConfig,
    state: LoopState,
    stop: StopReason,
) -> RunReport {
    let mut selector = split_rng(cfg.seed, streams::OUTPUT_SELECTION);
    let x_uniform = if state.trace.is_empty() {
        state.x.clone()
    } else {
        state.trace[selector.random_range(0..state.trace.len())].x.clone()
    };
    RunReport {
        method: cfg.method,
        trace: state.trace,
        x_final: state.x,
        x_uniform,
        stop,
        total_draws: env.ledger().total_draws(),
    }
}

fn divergence(k: usize, e: Error) -> Result<StepOutcome> {
    match e {
        Error::NonFiniteEstimate { .. } | Error::NonFiniteDecision { .. } => {
            Ok(StepOutcome::Stop(StopReason::Diverged {
                k,
                reason: e.to_string(),
            }))
        }
        other => Err(other),
    }
}

fn one_point_loop<E: Environment>(
    env: &mut EnvHandle<E>,
    cfg: &RunConfig,
    offset: OffsetMode,
    fixed_radius: bool,
    mut probe: Option<&mut MetricProbe<'_>>,
) -> Result<RunReport> {
    cfg.validate()?;
    env.check_dim(&cfg.x0)?;
    let start = env.ledger().total_draws();
    let mut rngs = DrawStreams::from_seed(cfg.seed);
    let mut state = LoopState {
        x: cfg.x0.clone(),
        mu: cfg.mu0,
        trace: Vec::new(),
    };
    let mut history = HistoryWindow::new(cfg.s_max)?;

    let mut c = match offset {
        OffsetMode::Fixed(c) => c,
        OffsetMode::Tracked if cfg.c0_samples > 0 => {
            if cfg.c0_samples as u64 > cfg.sample_budget {
                return Ok(finish(env, cfg, state, StopReason::BudgetExhausted));
            }
            let mut rng = split_rng(cfg.seed, streams::INITIAL_OFFSET);
            estimate_initial_c(env, &cfg.x0, cfg.c0_samples, &mut rng)?
        }
        OffsetMode::Tracked => cfg.c0,
    };

    let mut k = 0;
    let stop = loop {
        let used = env.ledger().total_draws() - start;
        if let Some(reason) = stop_before(cfg, k, used) {
            break reason;
        }
        let m = cfg.batch.at(k);
        let outcome = (|| -> Result<StepOutcome> {
            let smoothing = match SmoothingState::new(state.mu, c) {
                Ok(s) => s,
                Err(e @ Error::SmoothingTooSmall { .. }) => {
                    return Ok(StepOutcome::Stop(StopReason::Diverged {
                        k,
                        reason: e.to_string(),
                    }))
                }
                Err(e) => return Err(e),
            };
            let est = match one_point_estimate(env, &state.x, smoothing, m, &mut rngs) {
                Ok(est) => est,
                Err(e) => return divergence(k, e),
            };
            let beta = cfg.beta.at(k);
            let x_next = match descend(&state.x, &est.g, beta) {
                Ok(x) => x,
                Err(reason) => return Ok(StepOutcome::Stop(StopReason::Diverged { k, reason })),
            };
            let grad_norm_sq = est.grad_norm_sq();
            if !grad_norm_sq.is_finite() {
                return Ok(StepOutcome::Stop(StopReason::Diverged {
                    k,
                    reason: "squared estimate norm overflowed".into(),
                }));
            }
            state.trace.push(IterTrace {
                k,
                x: state.x.clone(),
                mu: state.mu,
                c: Some(c),
                grad_norm_sq,
                cumulative_draws: env.ledger().total_draws() - start,
                beta,
                batch_size: m,
                obj_probe: None,
            });
            if !fixed_radius {
                state.mu = (cfg.gamma * state.mu).max(cfg.mu_min);
            }
            if let OffsetMode::Tracked = offset {
                history.push(est.into_plus_batch());
                let weights =
                    compute_weights_with(&history, &x_next, cfg.distance_weight, cfg.weight_scheme)?;
                c = compute_c(&history, &weights, &x_next, env)?;
            }
            if let Some(p) = probe.as_deref_mut() {
                let value = p.maybe_measure(k, &x_next)?;
                if let Some(row) = state.trace.last_mut() {
                    row.obj_probe = value;
                }
            }
            state.x = x_next;
            Ok(StepOutcome::Continue)
        })()?;
        if let StepOutcome::Stop(reason) = outcome {
            break reason;
        }
        k += 1;
    };
    Ok(finish(env, cfg, state, stop))
}

fn two_point_loop<E: Environment>(
    env: &mut EnvHandle<E>,
    cfg: &RunConfig,
    mut probe: Option<&mut MetricProbe<'_>>,
) -> Result<RunReport> {
    cfg.validate()?;
    env.check_dim(&cfg.x0)?;
    let start = env.ledger().total_draws();
    let mut rngs = DrawStreams::from_seed(cfg.seed);
    let mut state = LoopState {
        x: cfg.x0.clone(),
        mu: cfg.mu0,
        trace: Vec::new(),
    };

    let mut k = 0;
    let stop = loop {
        let used = env.ledger().total_draws() - start;
        if let Some(reason) = stop_before(cfg, k, used) {
            break reason;
        }
        let m = cfg.batch.at(k);
        let outcome = (|| -> Result<StepOutcome> {
            let smoothing = SmoothingState::new(state.mu, 0.0)?;
            let est = match two_point_estimate(env, &state.x, smoothing, m, &mut rngs) {
                Ok(est) => est,
                Err(e) => return divergence(k, e),
            };
            let beta = cfg.beta.at(k);
            let x_next = match descend(&state.x, &est.g, beta) {
                Ok(x) => x,
                Err(reason) => return Ok(StepOutcome::Stop(StopReason::Diverged { k, reason })),
            };
            let grad_norm_sq = est.grad_norm_sq();
            if !grad_norm_sq.is_finite() {
                return Ok(StepOutcome::Stop(StopReason::Diverged {
                    k,
                    reason: "squared estimate norm overflowed".into(),
                }));
            }
            state.trace.push(IterTrace {
                k,
                x: state.x.clone(),
                mu: state.mu,
                c: None,
                grad_norm_sq,
                cumulative_draws: env.ledger().total_draws() - start,
                beta,
                batch_size: m,
                obj_probe: None,
            });
            state.mu = (cfg.gamma * state.mu).max(cfg.mu_min);
            if let Some(p) = probe.as_deref_mut() {
                let value = p.maybe_measure(k, &x_next)?;
                if let Some(row) = state.trace.last_mut() {
                    row.obj_probe = value;
                }
            }
            state.x = x_next;
            Ok(StepOutcome::Continue)
        })()?;
        if let StepOutcome::Stop(reason) = outcome {
            break reason;
        }
        k += 1;
    };
    Ok(finish(env, cfg, state, stop))
}
