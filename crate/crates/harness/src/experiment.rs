//! Multi-seed, multi-method experiment runner.
//!
//! Every `(method, seed)` pair is an independent run on the instance derived
//! from `seed`, so all methods see the same problem for a given seed. Output
//! layout under `output_dir`:
//!
//! * `traces/<method>_seed<seed>.jsonl`: one `IterTrace` per line
//! * `runs.jsonl`: one final record per run
//! * `summary.csv`: mean/sd of the final objective per method, with Welch
//!   tests against the baseline of the same batch kind

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ddzo_core::optimizers::{run_probed, BatchSchedule, BetaSchedule, Method, MetricProbe, RunConfig, RunReport, StopReason};
use ddzo_core::oracles::QuadraticShiftOracle;
use ddzo_core::pricing::{eval_obj_metric, read_theta_file, PricingEnv, PricingEnvSpec, ThetaDistribution};
use ddzo_core::rng::{split_rng, streams, StreamRng};
use ddzo_core::variance_reduction::WeightScheme;
use ddzo_core::{register_env, DecisionVector, EnvHandle, Environment};

use crate::config::{BatchKind, EnvConfig, ExperimentSpec, MethodVariant, PricingConfig};
use crate::stats::{mean, std_dev, welch_t_test};
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: String,
    pub seed: u64,
    /// Mean loss at `x_final` over `n_eval` metric-only draws.
    pub obj: f64,
    /// Optimizer draws; never exceeds the budget.
    pub total_draws: u64,
    /// Draws spent on probes and the final objective, kept off the budget.
    pub metric_draws: u64,
    pub iterations: usize,
    pub stop: StopReason,
    pub x_final: Vec<f64>,
    pub trace_file: PathBuf,
}

impl RunRecord {
    pub fn diverged(&self) -> bool {
        matches!(self.stop, StopReason::Diverged { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub mean_obj: f64,
    pub sd_obj: f64,
    pub n: usize,
    pub baseline: Option<String>,
    pub t_stat: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub records: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentOutcome {
    pub fn diverged(&self) -> usize {
        self.records.iter().filter(|r| r.diverged()).count()
    }

    pub fn row(&self, method: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.method == method)
    }
}

/// Optimizer configuration of one run.
pub fn run_config(
    spec: &ExperimentSpec,
    variant: MethodVariant,
    seed: u64,
    dim: usize,
) -> Result<RunConfig, HarnessError> {
    let p = &spec.params;
    let batch = match variant.batch {
        BatchKind::Mini => BatchSchedule::Affine {
            initial: p.batch_m0,
            slope: p.batch_slope,
        },
        BatchKind::B1 => BatchSchedule::Constant(1),
    };
    let mut cfg = RunConfig {
        method: variant.method,
        x0: DecisionVector::filled(dim, p.x0)?,
        mu0: p.mu0,
        mu_min: p.mu_min,
        gamma: p.gamma,
        s_max: p.s_max,
        distance_weight: p.distance_weight,
        weight_scheme: WeightScheme::Optimal,
        beta: BetaSchedule::Geometric {
            initial: p.beta0,
            ratio: p.beta_ratio,
        },
        batch,
        c0_samples: p.c0_samples,
        c0: 0.0,
        sample_budget: spec.budget,
        max_iters: spec.max_iters.unwrap_or(usize::MAX),
        seed,
    };
    match variant.method {
        Method::Alg1 => {}
        Method::Alg2 => cfg.c0_samples = 0,
        Method::Czo1 => {
            cfg.mu0 = p.czo_mu;
            cfg.mu_min = p.czo_mu;
            cfg.beta = BetaSchedule::Constant(p.czo_beta);
            cfg.c0_samples = 0;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Pricing instance for `seed`; θ comes from the file when one is configured.
pub fn pricing_instance(cfg: &PricingConfig, seed: u64) -> Result<PricingEnvSpec, HarnessError> {
    let mut rng = split_rng(seed, streams::INSTANCE);
    let base = match &cfg.theta_file {
        Some(path) => {
            let theta = read_theta_file(path)?;
            let w = theta
                .iter()
                .map(|t| rng.random_range(0.25..=0.5) * t)
                .collect();
            PricingEnvSpec::new(theta, w, cfg.m_buyers)?
        }
        None => PricingEnvSpec::synthetic(
            cfg.n,
            cfg.m_buyers,
            ThetaDistribution::Uniform {
                lo: cfg.theta_lo,
                hi: cfg.theta_hi,
            },
            &mut rng,
        )?,
    };
    let n = base.n();
    let mut spec = base.with_gamma_sens(vec![cfg.gamma_sens; n])?;
    if let Some(a0) = cfg.a0 {
        spec = spec.with_a0(a0)?;
    }
    Ok(spec)
}

pub fn analytic_instance(cfg: &crate::config::AnalyticConfig) -> QuadraticShiftOracle {
    QuadraticShiftOracle::isotropic(cfg.dim, cfg.shift, cfg.noise_sigma)
}

/// Result of a single run before anything is written.
#[derive(Debug, Clone)]
pub struct SingleRun {
    pub report: RunReport,
    pub obj: f64,
    pub metric_draws: u64,
}

type MetricFn<E> = fn(&mut EnvHandle<E>, &DecisionVector, usize, &mut StreamRng) -> ddzo_core::Result<f64>;

fn execute<E: Environment + Clone>(
    env: E,
    cfg: &RunConfig,
    metric_every: usize,
    n_eval: usize,
    metric: MetricFn<E>,
) -> Result<SingleRun, HarnessError> {
    let mut handle = register_env(env)?;
    let mut probe_handle = handle.fork();
    let mut probe_rng = split_rng(cfg.seed, streams::METRIC_PROBE);
    let report = {
        let mut probe = MetricProbe {
            every: metric_every,
            measure: Box::new(|x: &DecisionVector| metric(&mut probe_handle, x, n_eval, &mut probe_rng)),
        };
        run_probed(&mut handle, cfg, Some(&mut probe))?
    };
    let mut final_handle = handle.fork();
    let obj = metric(
        &mut final_handle,
        &report.x_final,
        n_eval,
        &mut split_rng(cfg.seed, streams::METRIC_FINAL),
    )?;
    Ok(SingleRun {
        report,
        obj,
        metric_draws: probe_handle.ledger().total_draws() + final_handle.ledger().total_draws(),
    })
}

fn mean_objective<E: Environment>(
    h: &mut EnvHandle<E>,
    x: &DecisionVector,
    n: usize,
    rng: &mut StreamRng,
) -> ddzo_core::Result<f64> {
    h.mean_objective(x, n, rng)
}

/// One `(method, seed)` run with no file output.
pub fn run_single(
    spec: &ExperimentSpec,
    variant: MethodVariant,
    seed: u64,
) -> Result<SingleRun, HarnessError> {
    match &spec.env {
        EnvConfig::Pricing(p) => {
            let env = PricingEnv::new(pricing_instance(p, seed)?);
            let cfg = run_config(spec, variant, seed, env.dim())?;
            execute(env, &cfg, spec.metric_every, spec.n_eval, eval_obj_metric)
        }
        EnvConfig::Analytic(a) => {
            let env = analytic_instance(a);
            let cfg = run_config(spec, variant, seed, env.dim())?;
            execute(env, &cfg, spec.metric_every, spec.n_eval, mean_objective)
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn trace_file_name(variant: MethodVariant, seed: u64) -> String {
    format!("{variant}_seed{seed}.jsonl")
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn summarize(methods: &[MethodVariant], records: &[RunRecord]) -> Vec<SummaryRow> {
    let objs = |name: &str| -> Vec<f64> {
        records
            .iter()
            .filter(|r| r.method == name && r.obj.is_finite())
            .map(|r| r.obj)
            .collect()
    };
    methods
        .iter()
        .map(|v| {
            let name = v.to_string();
            let own = objs(&name);
            let baseline = v
                .baseline()
                .filter(|b| methods.contains(b))
                .map(|b| b.to_string());
            let test = baseline
                .as_deref()
                .and_then(|b| welch_t_test(&own, &objs(b)));
            SummaryRow {
                mean_obj: mean(&own),
                sd_obj: std_dev(&own),
                n: own.len(),
                method: name,
                baseline,
                t_stat: test.map(|t| t.t),
                p_value: test.map(|t| t.p),
            }
        })
        .collect()
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::Csv(e.to_string()))?;
    for row in rows {
        w.serialize(row).map_err(|e| HarnessError::Csv(e.to_string()))?;
    }
    w.flush().map_err(io_err(path))
}

/// Runs every `(method, seed)` pair in parallel and writes all outputs.
/// Diverged runs keep their partial traces and are flagged in `runs.jsonl`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome, HarnessError> {
    spec.validate()?;
    let trace_dir = spec.output_dir.join("traces");
    fs::create_dir_all(&trace_dir).map_err(io_err(&trace_dir))?;
    let seeds = spec.seeds.to_vec();
    let jobs: Vec<(MethodVariant, u64)> = spec
        .methods
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(variant, seed)| {
            let run = run_single(spec, variant, seed)?;
            let trace_file = trace_dir.join(trace_file_name(variant, seed));
            write_jsonl(&trace_file, &run.report.trace)?;
            Ok(RunRecord {
                method: variant.to_string(),
                seed,
                obj: run.obj,
                total_draws: run.report.total_draws,
                metric_draws: run.metric_draws,
                iterations: run.report.trace.len(),
                stop: run.report.stop.clone(),
                x_final: run.report.x_final.as_slice().to_vec(),
                trace_file,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    write_jsonl(&spec.output_dir.join("runs.jsonl"), &records)?;
    let summary = summarize(&spec.methods, &records);
    write_summary_csv(&spec.output_dir.join("summary.csv"), &summary)?;
    Ok(ExperimentOutcome { records, summary })
}
