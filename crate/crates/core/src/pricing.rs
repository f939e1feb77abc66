//! Multiproduct pricing simulator.
//!
//! Each of `m_buyers` buyers independently picks product `i` with MNL
//! probability `p_i(x) ∝ exp(γ_i(θ_i - x_i))`, or nothing with weight `a₀`.
//! The loss is `-Σ x_i ξ_i + Σ c_i(ξ_i)` where `c_i` is piecewise linear with
//! slopes `2w_i`, `w_i`, `3w_i` split at `l_i` and `u_i`.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{DecisionVector, EnvHandle, Environment};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingEnvSpec {
    m_buyers: u32,
    theta: Vec<f64>,
    gamma_sens: Vec<f64>,
    a0: f64,
    w: Vec<f64>,
    l: Vec<f64>,
    u: Vec<f64>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

impl PricingEnvSpec {
    /// Spec with `γ_i = 1`, `a₀ = 0.1 n`, `l_i = 0.5 m/n`, `u_i = 1.5 m/n`.
    pub fn new(theta: Vec<f64>, w: Vec<f64>, m_buyers: u32) -> Result<Self> {
        let n = theta.len();
        if n == 0 {
            return Err(Error::InvalidDimension(0));
        }
        let per_product = f64::from(m_buyers) / n as f64;
        let spec = Self {
            m_buyers,
            gamma_sens: vec![1.0; n],
            a0: 0.1 * n as f64,
            l: vec![0.5 * per_product; n],
            u: vec![1.5 * per_product; n],
            theta,
            w,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Costs at the midpoint ratio `w_i = 0.375 θ_i`.
    pub fn with_theta(theta: Vec<f64>, m_buyers: u32) -> Result<Self> {
        let w = theta.iter().map(|t| 0.375 * t).collect();
        Self::new(theta, w, m_buyers)
    }

    /// Synthetic instance: `θ` from `dist`, `w = ρθ` with `ρ ~ U[0.25, 0.5]`.
    pub fn synthetic<R: Rng + ?Sized>(
        n: usize,
        m_buyers: u32,
        dist: ThetaDistribution,
        rng: &mut R,
    ) -> Result<Self> {
        let (theta, w) = synth_theta(n, dist, rng)?;
        Self::new(theta, w, m_buyers)
    }

    pub fn with_a0(mut self, a0: f64) -> Result<Self> {
        self.a0 = a0;
        self.validate()?;
        Ok(self)
    }

    pub fn with_gamma_sens(mut self, gamma_sens: Vec<f64>) -> Result<Self> {
        self.gamma_sens = gamma_sens;
        self.validate()?;
        Ok(self)
    }

    pub fn with_breakpoints(mut self, l: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        self.l = l;
        self.u = u;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.theta.len();
        if n == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if self.m_buyers < 1 {
            return Err(invalid("m_buyers must be at least 1"));
        }
        for (name, v) in [
            ("gamma_sens", &self.gamma_sens),
            ("w", &self.w),
            ("l", &self.l),
            ("u", &self.u),
        ] {
            if v.len() != n {
                return Err(invalid(format!("{name} has length {}, expected {n}", v.len())));
            }
        }
        if !self.theta.iter().all(|t| t.is_finite() && *t > 0.0) {
            return Err(invalid("theta entries must be finite and > 0"));
        }
        // γ = 0 is the price-insensitive limit and stays admissible
        if !self.gamma_sens.iter().all(|g| g.is_finite() && *g >= 0.0) {
            return Err(invalid("gamma_sens entries must be finite and >= 0"));
        }
        if !(self.a0.is_finite() && self.a0 > 0.0) {
            return Err(invalid("a0 must be finite and > 0"));
        }
        if !self.w.iter().all(|w| w.is_finite() && *w >= 0.0) {
            return Err(invalid("unit costs must be finite and >= 0"));
        }
        let ordered = self
            .l
            .iter()
            .zip(&self.u)
            .all(|(l, u)| l.is_finite() && u.is_finite() && l < u);
        if !ordered {
            return Err(invalid("breakpoints must satisfy l_i < u_i"));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }

    pub fn m_buyers(&self) -> u32 {
        self.m_buyers
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn gamma_sens(&self) -> &[f64] {
        &self.gamma_sens
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn l(&self) -> &[f64] {
        &self.l
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    fn check_dim(&self, x: &DecisionVector) -> Result<()> {
        if x.dim() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: x.dim(),
            });
        }
        Ok(())
    }
}

/// Purchase counts: index 0 is no-purchase, `1..=n` are products.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemandVector(Vec<u32>);

impl DemandVector {
    /// Counts of length `n + 1` that must sum to `m_buyers`.
    pub fn new(spec: &PricingEnvSpec, counts: Vec<u32>) -> Result<Self> {
        if counts.len() != spec.n() + 1 {
            return Err(Error::DimensionMismatch {
                expected: spec.n() + 1,
                got: counts.len(),
            });
        }
        let total: u64 = counts.iter().map(|&c| u64::from(c)).sum();
        if total != u64::from(spec.m_buyers) {
            return Err(invalid(format!(
                "demand sums to {total}, expected {}",
                spec.m_buyers
            )));
        }
        Ok(Self(counts))
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn no_purchase(&self) -> u32 {
        self.0[0]
    }

    /// Sales of product `i` (0-based).
    pub fn sales(&self, i: usize) -> u32 {
        self.0[i + 1]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|&c| u64::from(c)).sum()
    }
}

/// `[p₀, p₁, …, p_n]`, stabilized by shifting all log-weights by their max.
pub fn choice_probs(spec: &PricingEnvSpec, x: &DecisionVector) -> Result<Vec<f64>> {
    spec.check_dim(x)?;
    let mut logits = Vec::with_capacity(spec.n() + 1);
    logits.push(spec.a0.ln());
    logits.extend(
        spec.theta
            .iter()
            .zip(&spec.gamma_sens)
            .zip(x.iter())
            .map(|((t, g), xi)| g * (t - xi)),
    );
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|v| (v - top).exp()).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    Ok(p)
}

/// Tally of `m_buyers` categorical draws by inverse CDF.
pub fn sample_demand<R: Rng + ?Sized>(
    spec: &PricingEnvSpec,
    x: &DecisionVector,
    rng: &mut R,
) -> Result<DemandVector> {
    let p = choice_probs(spec, x)?;
    let mut cdf: Vec<f64> = p
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect();
    // rounding may leave the last cumulative value just under 1
    let last = cdf.len() - 1;
    cdf[last] = f64::INFINITY;
    let mut counts = vec![0u32; p.len()];
    for _ in 0..spec.m_buyers {
        let r: f64 = rng.random();
        let idx = cdf.partition_point(|&c| c <= r);
        counts[idx] += 1;
    }
    Ok(DemandVector(counts))
}

/// Piecewise-linear cost of selling `q` units.
pub fn piecewise_cost(w: f64, l: f64, u: f64, q: f64) -> f64 {
    if q <= l {
        2.0 * w * q
    } else if q <= u {
        w * (q - l) + 2.0 * w * l
    } else {
        3.0 * w * (q - u) + w * (u - l) + 2.0 * w * l
    }
}

/// Negative sales plus cost.
pub fn pricing_f(spec: &PricingEnvSpec, x: &DecisionVector, xi: &DemandVector) -> f64 {
    (0..spec.n())
        .map(|i| {
            let q = f64::from(xi.sales(i));
            -x[i] * q + piecewise_cost(spec.w[i], spec.l[i], spec.u[i], q)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ThetaDistribution {
    Uniform { lo: f64, hi: f64 },
}

impl Default for ThetaDistribution {
    fn default() -> Self {
        ThetaDistribution::Uniform { lo: 0.5, hi: 1.5 }
    }
}

/// `(θ, w)` with `w_i = ρ_i θ_i`, `ρ_i ~ U[0.25, 0.5]`.
pub fn synth_theta<R: Rng + ?Sized>(
    n: usize,
    dist: ThetaDistribution,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if n < 1 {
        return Err(Error::InvalidDimension(0));
    }
    let ThetaDistribution::Uniform { lo, hi } = dist;
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
        return Err(invalid(format!("theta range [{lo}, {hi}] must be positive")));
    }
    let mut theta = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for _ in 0..n {
        let t = if lo == hi { lo } else { rng.random_range(lo..hi) };
        let rho = rng.random_range(0.25..=0.5);
        theta.push(t);
        w.push(rho * t);
    }
    Ok((theta, w))
}

/// One positive decimal per line; blank lines are skipped.
pub fn parse_theta(text: &str) -> Result<Vec<f64>> {
    let mut theta = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| invalid(format!("theta line {}: not a number: {line:?}", lineno + 1)))?;
        if !(v.is_finite() && v > 0.0) {
            return Err(invalid(format!("theta line {}: value must be > 0", lineno + 1)));
        }
        theta.push(v);
    }
    if theta.is_empty() {
        return Err(invalid("theta file is empty"));
    }
    Ok(theta)
}

pub fn read_theta_file(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid(format!("reading {}: {e}", path.display())))?;
    parse_theta(&text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricingEnv {
    spec: PricingEnvSpec,
}

impl PricingEnv {
    /// The spec is validated on construction, so this cannot fail.
    pub fn new(spec: PricingEnvSpec) -> Self {
        Self { spec }
    }

    pub fn spec(&self) -> &PricingEnvSpec {
        &self.spec
    }
}

impl Environment for PricingEnv {
    type Outcome = DemandVector;

    fn dim(&self) -> usize {
        self.spec.n()
    }

    fn draw<R: Rng + ?Sized>(&self, x: &DecisionVector, rng: &mut R) -> Result<DemandVector> {
        sample_demand(&self.spec, x, rng)
    }

    fn eval_f(&self, x: &DecisionVector, outcome: &DemandVector) -> f64 {
        pricing_f(&self.spec, x, outcome)
    }
}

/// Mean loss over `n_eval` fresh realizations, drawn through `metric` so that
/// the draws land on its ledger and never on an optimizer's.
pub fn eval_obj_metric<R: Rng + ?Sized>(
    metric: &mut EnvHandle<PricingEnv>,
    x_hat: &DecisionVector,
    n_eval: usize,
    rng: &mut R,
) -> Result<f64> {
    if n_eval < 1 {
        return Err(invalid("n_eval must be at least 1"));
    }
    metric.mean_objective(x_hat, n_eval, rng)
}
