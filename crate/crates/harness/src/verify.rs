//! Monte-Carlo and property checks exposed through `ddzo verify`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::Exp1;

use ddzo_core::estimators::{estimate, EstimatorKind, SmoothingState};
use ddzo_core::optimizers::{run, BatchSchedule, BetaSchedule, Method, RunConfig};
use ddzo_core::oracles::{second_moment_bound, BoundInputs, BoundKind, QuadraticShiftOracle};
use ddzo_core::pricing::{choice_probs, piecewise_cost, sample_demand, PricingEnvSpec, ThetaDistribution};
use ddzo_core::rng::split_rng;
use ddzo_core::variance_reduction::optimal_weights;
use ddzo_core::estimators::second_moment_estimate;
use ddzo_core::{register_env, DecisionVector, DrawStreams};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Estimators,
    Weights,
    Schedules,
    Pricing,
    All,
}

impl FromStr for Suite {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "estimators" => Ok(Suite::Estimators),
            "weights" => Ok(Suite::Weights),
            "schedules" => Ok(Suite::Schedules),
            "pricing" => Ok(Suite::Pricing),
            "all" => Ok(Suite::All),
            other => Err(HarnessError::Config(format!("unknown suite {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compare {
    /// Pass when `measured <= threshold`.
    AtMost,
    /// Pass when `measured < threshold`.
    Below,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub compare: Compare,
}

impl Check {
    pub fn new(name: impl Into<String>, measured: f64, compare: Compare, threshold: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            threshold,
            compare,
        }
    }

    pub fn passed(&self) -> bool {
        match self.compare {
            Compare::AtMost => self.measured <= self.threshold,
            Compare::Below => self.measured < self.threshold,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.compare {
            Compare::AtMost => "<=",
            Compare::Below => "<",
        };
        write!(
            f,
            "{} {}: {:.6e} {op} {:.6e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.threshold
        )
    }
}

/// Sample sizes for the suites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Effort {
    pub trials: usize,
    pub simplex_points: usize,
    pub seed: u64,
}

impl Default for Effort {
    fn default() -> Self {
        Self {
            trials: 20_000,
            simplex_points: 10_000,
            seed: 0,
        }
    }
}

pub fn run_suite(suite: Suite, effort: Effort) -> Result<Vec<Check>, HarnessError> {
    match suite {
        Suite::Estimators => estimator_checks(effort),
        Suite::Weights => weight_checks(effort),
        Suite::Schedules => schedule_checks(effort),
        Suite::Pricing => pricing_checks(effort),
        Suite::All => {
            let mut all = Vec::new();
            for s in [Suite::Estimators, Suite::Weights, Suite::Schedules, Suite::Pricing] {
                all.extend(run_suite(s, effort)?);
            }
            Ok(all)
        }
    }
}

/// Largest componentwise `|mean - target| / SE` over `n` estimates.
fn max_z_score(
    kind: EstimatorKind,
    oracle: &QuadraticShiftOracle,
    x: &DecisionVector,
    state: SmoothingState,
    n: usize,
    seed: u64,
) -> Result<f64, HarnessError> {
    let target = oracle.smoothed(x, state.mu()).gradient;
    let mut env = register_env(oracle.clone())?;
    let mut streams = DrawStreams::from_seed(seed);
    let d = x.dim();
    let (mut sum, mut sum_sq) = (vec![0.0; d], vec![0.0; d]);
    for _ in 0..n {
        let g = estimate(kind, &mut env, x, state, 1, &mut streams)?.g;
        for i in 0..d {
            sum[i] += g[i];
            sum_sq[i] += g[i] * g[i];
        }
    }
    let nf = n as f64;
    Ok((0..d)
        .map(|i| {
            let mean = sum[i] / nf;
            let var = (sum_sq[i] / nf - mean * mean) * nf / (nf - 1.0);
            (mean - target[i]).abs() / (var / nf).sqrt()
        })
        .fold(0.0, f64::max))
}

/// `x = t·e` with `F(x) = 10` on the isotropic oracle (`A = 0.5 I`, `b = e/√5`).
pub fn level_ten_point() -> DecisionVector {
    let t = (-(5f64).sqrt() / 2.0 + (1.25f64 + 200.0).sqrt()) / 10.0;
    DecisionVector::filled(5, t).expect("finite")
}

fn estimator_checks(effort: Effort) -> Result<Vec<Check>, HarnessError> {
    let oracle = QuadraticShiftOracle::isotropic(5, 0.5, 1.0);
    let x = DecisionVector::filled(5, 0.5)?;
    let f = oracle.value(&x);
    let mut checks = Vec::new();
    for (label, c) in [("0", 0.0), ("F(x)", f), ("100", 100.0)] {
        let z = max_z_score(
            EstimatorKind::OnePoint,
            &oracle,
            &x,
            SmoothingState::new(0.5, c)?,
            effort.trials,
            effort.seed,
        )?;
        checks.push(Check::new(format!("one-point unbiased, c = {label} (max |z|)"), z, Compare::AtMost, 5.0));
    }
    let z = max_z_score(
        EstimatorKind::TwoPoint,
        &oracle,
        &x,
        SmoothingState::new(0.5, 0.0)?,
        effort.trials,
        effort.seed + 1,
    )?;
    checks.push(Check::new("two-point unbiased (max |z|)", z, Compare::AtMost, 5.0));

    let x10 = level_ten_point();
    let mut env = register_env(oracle.clone())?;
    let tuned = second_moment_estimate(
        EstimatorKind::OnePoint,
        &mut env,
        &x10,
        SmoothingState::new(0.1, oracle.value(&x10))?,
        1,
        effort.trials,
        &mut DrawStreams::from_seed(effort.seed + 2),
    )?;
    let naive = second_moment_estimate(
        EstimatorKind::OnePoint,
        &mut env,
        &x10,
        SmoothingState::new(0.1, 0.0)?,
        1,
        effort.trials,
        &mut DrawStreams::from_seed(effort.seed + 3),
    )?;
    checks.push(Check::new(
        "second moment ratio c = F(x) vs c = 0",
        tuned.mean / naive.mean,
        Compare::Below,
        0.5,
    ));

    checks.extend(bound_checks(&oracle, &x, effort)?);
    Ok(checks)
}

/// `(E‖g‖² - 3 SE) / bound` for each radius and batch size; must stay ≤ 1.
fn bound_checks(
    oracle: &QuadraticShiftOracle,
    x: &DecisionVector,
    effort: Effort,
) -> Result<Vec<Check>, HarnessError> {
    let grad_norm_sq: f64 = oracle.gradient(x).iter().map(|g| g * g).sum();
    let inputs = |gap: f64| BoundInputs {
        sigma: oracle.sigma(),
        smoothness: oracle.smoothness(),
        dim: x.dim(),
        grad_norm_sq,
        offset_gap: gap,
    };
    let f = oracle.value(x);
    let mut checks = Vec::new();
    let mut stream = effort.seed + 10;
    for mu in [0.05, 0.1, 0.5] {
        for m in [1, 10] {
            for (kind, bound_kind, c) in [
                (EstimatorKind::OnePoint, BoundKind::OnePoint, 0.0),
                (EstimatorKind::OnePoint, BoundKind::OnePoint, f),
                (EstimatorKind::TwoPoint, BoundKind::TwoPoint, 0.0),
            ] {
                stream += 1;
                let mut env = register_env(oracle.clone())?;
                let est = second_moment_estimate(
                    kind,
                    &mut env,
                    x,
                    SmoothingState::new(mu, c)?,
                    m,
                    effort.trials / m.max(1),
                    &mut DrawStreams::from_seed(stream),
                )?;
                let rhs = second_moment_bound(bound_kind, &inputs(f - c), mu, m);
                let label = match kind {
                    EstimatorKind::OnePoint => format!("one-point bound, c = {c:.3}"),
                    EstimatorKind::TwoPoint => "two-point bound".to_string(),
                };
                checks.push(Check::new(
                    format!("{label}, mu = {mu}, m = {m} ((E - 3SE) / bound)"),
                    (est.mean - 3.0 * est.std_err) / rhs,
                    Compare::AtMost,
                    1.0,
                ));
            }
        }
    }
    Ok(checks)
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    for (i, s) in sorted.iter().enumerate() {
        cumulative += s;
        let candidate = (cumulative - 1.0) / (i + 1) as f64;
        if s - candidate > 0.0 {
            tau = candidate;
        }
    }
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

/// Accelerated projected gradient on `Σ b_i a_i²` over the simplex with
/// gradient-based restarts; an iterative reference for the closed-form weights.
pub fn projected_gradient_weights(b: &[f64]) -> Vec<f64> {
    let step = 1.0 / (2.0 * b.iter().copied().fold(0.0, f64::max));
    let n = b.len();
    let mut x = vec![1.0 / n as f64; n];
    let mut y = x.clone();
    let mut t = 1.0f64;
    for it in 0..1_000_000 {
        let moved: Vec<f64> = y.iter().zip(b).map(|(yi, bi)| yi - step * 2.0 * bi * yi).collect();
        let next = project_simplex(&moved);
        let uphill: f64 = y
            .iter()
            .zip(&next)
            .zip(&x)
            .map(|((yi, ni), xi)| (yi - ni) * (ni - xi))
            .sum();
        if uphill > 0.0 {
            t = 1.0;
            y = x.clone();
            continue;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let change: f64 = next.iter().zip(&x).map(|(a, c)| (a - c).abs()).sum();
        y = next
            .iter()
            .zip(&x)
            .map(|(a, c)| a + (t - 1.0) / t_next * (a - c))
            .collect();
        x = next;
        t = t_next;
        if change < 1e-16 && it > 10 {
            break;
        }
    }
    x
}

pub fn weight_objective(b: &[f64], a: &[f64]) -> f64 {
    b.iter().zip(a).map(|(bi, ai)| bi * ai * ai).sum()
}

/// Uniform point on the simplex via normalized exponentials.
pub fn random_simplex_point<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// Score vector of length 1–10 with log-uniform entries in `[1e-3, 1e3]`.
pub fn random_scores<R: Rng + ?Sized>(rng: &mut R) -> Vec<f64> {
    let n = rng.random_range(1..=10);
    (0..n).map(|_| 10f64.powf(rng.random_range(-3.0..=3.0))).collect()
}

/// `(max |closed − reference|, max (closed − best random))` over 100 vectors.
pub fn weight_optimality(points: usize, seed: u64) -> Result<(f64, f64), HarnessError> {
    let mut rng = split_rng(seed, 40);
    let (mut worst_gap, mut worst_margin) = (0.0f64, f64::NEG_INFINITY);
    for _ in 0..100 {
        let b = random_scores(&mut rng);
        let closed = weight_objective(&b, &optimal_weights(&b)?);
        let reference = weight_objective(&b, &projected_gradient_weights(&b));
        worst_gap = worst_gap.max((closed - reference).abs());
        let best_random = (0..points)
            .map(|_| weight_objective(&b, &random_simplex_point(b.len(), &mut rng)))
            .fold(f64::INFINITY, f64::min);
        worst_margin = worst_margin.max(closed - best_random);
    }
    Ok((worst_gap, worst_margin))
}

fn weight_checks(effort: Effort) -> Result<Vec<Check>, HarnessError> {
    let (gap, margin) = weight_optimality(effort.simplex_points, effort.seed)?;
    Ok(vec![
        Check::new("closed-form vs projected-gradient objective gap", gap, Compare::AtMost, 1e-8),
        Check::new("closed-form minus best random simplex objective", margin, Compare::AtMost, 0.0),
    ])
}

fn schedule_checks(effort: Effort) -> Result<Vec<Check>, HarnessError> {
    let oracle = QuadraticShiftOracle::isotropic(5, 0.5, 1.0);
    let mut checks = Vec::new();

    let mut cfg = RunConfig::pricing_defaults(Method::Alg1, DecisionVector::filled(5, 0.5)?, effort.seed);
    cfg.sample_budget = u64::MAX;
    cfg.max_iters = 300;
    cfg.batch = BatchSchedule::Constant(1);
    let report = run(&mut register_env(oracle.clone())?, &cfg)?;
    let mut worst = 0.0f64;
    for w in report.trace.windows(2) {
        worst = worst.max((w[1].mu - (cfg.gamma * w[0].mu).max(cfg.mu_min)).abs());
    }
    checks.push(Check::new("radius recursion max deviation", worst, Compare::AtMost, 0.0));
    checks.push(Check::new(
        "radius after one step minus 0.1805",
        (report.trace[1].mu - 0.1805).abs(),
        Compare::AtMost,
        1e-15,
    ));
    let floor_k = ((cfg.mu_min / cfg.mu0).ln() / cfg.gamma.ln()).ceil() as usize;
    let off_floor = report.trace[floor_k..]
        .iter()
        .map(|r| (r.mu - cfg.mu_min).abs())
        .fold(0.0, f64::max);
    checks.push(Check::new(
        format!("radius pinned at mu_min from k = {floor_k}"),
        off_floor,
        Compare::AtMost,
        0.0,
    ));
    let beta = BetaSchedule::Geometric {
        initial: 1e-3,
        ratio: 0.95,
    };
    checks.push(Check::new(
        "step at k = 0 minus 9.5e-4",
        (beta.at(0) - 9.5e-4).abs(),
        Compare::AtMost,
        1e-18,
    ));

    for method in [Method::Alg1, Method::Alg2, Method::Czo1] {
        let mut cfg = RunConfig::pricing_defaults(method, DecisionVector::filled(5, 0.5)?, effort.seed);
        cfg.c0_samples = 0;
        let report = run(&mut register_env(oracle.clone())?, &cfg)?;
        let per = method.draws_per_batch_unit();
        let expected: u64 = (0..report.trace.len()).map(|k| per * cfg.batch.at(k) as u64).sum();
        let next = per * cfg.batch.at(report.trace.len()) as u64;
        checks.push(Check::new(
            format!("{} draws minus schedule sum", method.name()),
            (report.total_draws as f64 - expected as f64).abs(),
            Compare::AtMost,
            0.0,
        ));
        checks.push(Check::new(
            format!("{} draws over budget", method.name()),
            report.total_draws as f64 - cfg.sample_budget as f64,
            Compare::AtMost,
            0.0,
        ));
        checks.push(Check::new(
            format!("{} unused budget minus next batch", method.name()),
            (cfg.sample_budget - report.total_draws) as f64 - next as f64,
            Compare::Below,
            0.0,
        ));
    }
    Ok(checks)
}

fn pricing_checks(effort: Effort) -> Result<Vec<Check>, HarnessError> {
    let mut rng = split_rng(effort.seed, 50);
    let mut worst_sum = 0.0f64;
    let mut worst_range = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=12);
        let spec = PricingEnvSpec::synthetic(n, 40, ThetaDistribution::default(), &mut rng)?
            .with_a0(rng.random_range(0.01..5.0))?
            .with_gamma_sens((0..n).map(|_| rng.random_range(0.0..5.0)).collect())?;
        let x = DecisionVector::new((0..n).map(|_| rng.random_range(-20.0..20.0)).collect())?;
        let p = choice_probs(&spec, &x)?;
        worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
        worst_range = worst_range.max(p.iter().map(|v| (-v).max(v - 1.0)).fold(0.0, f64::max));
    }
    let mut checks = vec![
        Check::new("choice probabilities sum to one", worst_sum, Compare::AtMost, 1e-12),
        Check::new("choice probabilities outside [0, 1]", worst_range, Compare::AtMost, 0.0),
    ];

    let spec = PricingEnvSpec::synthetic(10, 40, ThetaDistribution::default(), &mut rng)?;
    let x = DecisionVector::new(spec.theta().to_vec())?;
    let target = f64::from(spec.m_buyers()) / (spec.n() as f64 + spec.a0());
    let n = effort.trials;
    let (mut sum, mut sum_sq) = (vec![0.0; 11], vec![0.0; 11]);
    let mut worst_total = 0.0f64;
    for _ in 0..n {
        let xi = sample_demand(&spec, &x, &mut rng)?;
        worst_total = worst_total.max((xi.total() as f64 - 40.0).abs());
        for i in 0..spec.n() {
            let s = f64::from(xi.sales(i));
            sum[i] += s;
            sum_sq[i] += s * s;
        }
    }
    let nf = n as f64;
    let z = (0..spec.n())
        .map(|i| {
            let mean = sum[i] / nf;
            let var = (sum_sq[i] / nf - mean * mean) * nf / (nf - 1.0);
            (mean - target).abs() / (var / nf).sqrt()
        })
        .fold(0.0, f64::max);
    checks.push(Check::new("mean sales at theta (max |z|)", z, Compare::AtMost, 3.0));
    checks.push(Check::new("buyers not conserved", worst_total, Compare::AtMost, 0.0));

    let mut jump = 0.0f64;
    for _ in 0..1000 {
        let w = rng.random_range(0.0..5.0);
        let l = rng.random_range(0.0..10.0);
        let u = l + rng.random_range(0.1..10.0);
        jump = jump.max((piecewise_cost(w, l, u, l) - 2.0 * w * l).abs());
        jump = jump.max((piecewise_cost(w, l, u, u) - (w * (u - l) + 2.0 * w * l)).abs());
    }
    checks.push(Check::new("cost jump at breakpoints", jump, Compare::AtMost, 1e-12));
    Ok(checks)
}
