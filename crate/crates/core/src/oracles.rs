//! Closed-form test problems and verification helpers.
//!
//! [`QuadraticShiftOracle`] is a location family `ξ = Ax + ν`, `ν ~ N(0, s²I)`,
//! with loss `f(x, ξ) = ‖x‖² + b·ξ`. Its objective, gradient and Gaussian
//! smoothing are all exact:
//!
//! * `F(x)   = ‖x‖² + bᵀAx`
//! * `∇F(x)  = 2x + Aᵀb`
//! * `F_μ(x) = F(x) + μ²d`, hence `∇F_μ = ∇F`
//!
//! and the problem constants are `H_F = 2`, `σ = ‖b‖·s`, `L_ξ = ‖b‖`,
//! `α = ‖A‖_op`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::env::{running_mean, DecisionVector, EnvHandle, Environment};
use crate::error::{Error, Result};
use crate::optimizers::TheoryConstants;
use crate::rng::DrawStreams;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticShiftOracle {
    dim: usize,
    /// Row-major `dim × dim`.
    shift: Vec<f64>,
    b: Vec<f64>,
    noise_sigma: f64,
}

impl QuadraticShiftOracle {
    pub fn new(shift_rows: Vec<Vec<f64>>, b: Vec<f64>, noise_sigma: f64) -> Result<Self> {
        let dim = b.len();
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if shift_rows.len() != dim || shift_rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidArgument(format!(
                "shift matrix must be {dim}x{dim}"
            )));
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument("noise_sigma must be finite and >= 0".into()));
        }
        let shift: Vec<f64> = shift_rows.into_iter().flatten().collect();
        if shift.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("oracle coefficients must be finite".into()));
        }
        Ok(Self {
            dim,
            shift,
            b,
            noise_sigma,
        })
    }

    /// `A = shift·I`, `b = e/√d` (unit norm), so `σ = noise_sigma`.
    pub fn isotropic(dim: usize, shift: f64, noise_sigma: f64) -> Self {
        let rows = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { shift } else { 0.0 }).collect())
            .collect();
        let b = vec![1.0 / (dim as f64).sqrt(); dim];
        Self::new(rows, b, noise_sigma).expect("isotropic oracle parameters are valid")
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    fn shift_apply(&self, x: &[f64]) -> Vec<f64> {
        self.shift
            .chunks(self.dim)
            .map(|row| row.iter().zip(x).map(|(a, v)| a * v).sum())
            .collect()
    }

    fn shift_transpose_apply(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (row, yi) in self.shift.chunks(self.dim).zip(y) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * yi;
            }
        }
        out
    }

    pub fn value(&self, x: &DecisionVector) -> f64 {
        let ax = self.shift_apply(x);
        x.norm_sq() + dot(&self.b, &ax)
    }

    pub fn gradient(&self, x: &DecisionVector) -> Vec<f64> {
        let atb = self.shift_transpose_apply(&self.b);
        x.iter().zip(atb).map(|(xi, g)| 2.0 * xi + g).collect()
    }

    pub fn smoothed(&self, x: &DecisionVector, mu: f64) -> SmoothedGroundTruth {
        SmoothedGroundTruth {
            value: self.value(x) + mu * mu * self.dim as f64,
            gradient: self.gradient(x),
        }
    }

    /// Minimizer `-Aᵀb / 2`.
    pub fn minimizer(&self) -> Vec<f64> {
        self.shift_transpose_apply(&self.b)
            .into_iter()
            .map(|v| -0.5 * v)
            .collect()
    }

    pub fn sigma(&self) -> f64 {
        norm(&self.b) * self.noise_sigma
    }

    pub fn smoothness(&self) -> f64 {
        2.0
    }

    pub fn outcome_lipschitz(&self) -> f64 {
        norm(&self.b)
    }

    /// `‖A‖_op`, the Wasserstein-1 shift rate of `D(x)`.
    pub fn shift_lipschitz(&self) -> f64 {
        // power iteration on AᵀA
        let mut v = vec![1.0 / (self.dim as f64).sqrt(); self.dim];
        let mut sigma_sq = 0.0;
        for _ in 0..500 {
            let w = self.shift_transpose_apply(&self.shift_apply(&v));
            let n = norm(&w);
            if n == 0.0 {
                return 0.0;
            }
            sigma_sq = n;
            v = w.into_iter().map(|x| x / n).collect();
        }
        sigma_sq.sqrt()
    }
}

impl Environment for QuadraticShiftOracle {
    type Outcome = Vec<f64>;

    fn dim(&self) -> usize {
        self.dim
    }

    fn draw<R: Rng + ?Sized>(&self, x: &DecisionVector, rng: &mut R) -> Result<Vec<f64>> {
        let mut xi = self.shift_apply(x);
        for v in &mut xi {
            let z: f64 = rng.sample(StandardNormal);
            *v += self.noise_sigma * z;
        }
        Ok(xi)
    }

    fn eval_f(&self, x: &DecisionVector, outcome: &Vec<f64>) -> f64 {
        x.norm_sq() + dot(&self.b, outcome)
    }
}

/// Exact `F_μ(x)` and `∇F_μ(x)` for the oracle family.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedGroundTruth {
    pub value: f64,
    pub gradient: Vec<f64>,
}

pub fn oracle_true_gradient(oracle: &QuadraticShiftOracle, x: &DecisionVector) -> Vec<f64> {
    oracle.gradient(x)
}

/// `f(x, ξ) = K` everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantEnv {
    dim: usize,
    value: f64,
}

impl ConstantEnv {
    pub fn new(dim: usize, value: f64) -> Self {
        Self { dim, value }
    }
}

impl Environment for ConstantEnv {
    type Outcome = ();

    fn dim(&self) -> usize {
        self.dim
    }

    fn draw<R: Rng + ?Sized>(&self, _x: &DecisionVector, _rng: &mut R) -> Result<()> {
        Ok(())
    }

    fn eval_f(&self, _x: &DecisionVector, _outcome: &()) -> f64 {
        self.value
    }
}

/// Deterministic `f(x, ξ) = a·x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEnv {
    coefficients: Vec<f64>,
}

impl LinearEnv {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Self { coefficients }
    }
}

impl Environment for LinearEnv {
    type Outcome = ();

    fn dim(&self) -> usize {
        self.coefficients.len()
    }

    fn draw<R: Rng + ?Sized>(&self, _x: &DecisionVector, _rng: &mut R) -> Result<()> {
        Ok(())
    }

    fn eval_f(&self, x: &DecisionVector, _outcome: &()) -> f64 {
        dot(&self.coefficients, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n: usize,
}

/// Monte-Carlo estimate of `F_μ(x) = E_u[F(x + μu)]`: for each of `n`
/// perturbations, the mean of `inner` outcomes drawn at `x + μu`.
pub fn mc_smoothed_value<E: Environment>(
    env: &mut EnvHandle<E>,
    x: &DecisionVector,
    mu: f64,
    n: usize,
    inner: usize,
    streams: &mut DrawStreams,
) -> Result<McEstimate> {
    if n < 1 || inner < 1 {
        return Err(Error::InvalidArgument("n and inner must be at least 1".into()));
    }
    env.check_dim(x)?;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..n {
        let u: Vec<f64> = (0..x.dim())
            .map(|_| streams.perturbation.sample(StandardNormal))
            .collect();
        let probe = x.offset(&u, mu)?;
        let batch = env.sample(&probe, inner, &mut streams.outcomes)?;
        let v = running_mean(batch.outcomes().iter().map(|xi| env.eval_f(&probe, xi)));
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    let std_err = if n > 1 {
        (m2 / (n - 1) as f64 / n as f64).sqrt()
    } else {
        f64::NAN
    };
    Ok(McEstimate { mean, std_err, n })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    /// Second moment of the mini-batch one-point estimator.
    OnePoint,
    /// Second moment of the mini-batch two-point estimator.
    TwoPoint,
}

/// Problem quantities entering the second-moment bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub sigma: f64,
    pub smoothness: f64,
    pub dim: usize,
    pub grad_norm_sq: f64,
    /// `F(x) - c`; ignored for the two-point bound.
    pub offset_gap: f64,
}

pub fn second_moment_bound(kind: BoundKind, inputs: &BoundInputs, mu: f64, m: usize) -> f64 {
    let d = inputs.dim as f64;
    let m = m as f64;
    let smoothing = 1.5 * mu * mu * inputs.smoothness.powi(2) * (d + 6.0).powi(3);
    let gradient = 6.0 * (d + 4.0) * inputs.grad_norm_sq;
    let sigma_sq = inputs.sigma * inputs.sigma;
    match kind {
        BoundKind::OnePoint => {
            smoothing
                + gradient
                + 3.0 * sigma_sq * d / (mu * mu * m)
                + 3.0 * d * inputs.offset_gap.powi(2) / (mu * mu)
        }
        BoundKind::TwoPoint => smoothing + gradient + 3.0 * sigma_sq * d / (2.0 * mu * mu * m),
    }
}

/// Ceiling on `E[(F(x_k) - c_k)²]` for the variance-reduced one-point method
/// when `β ≤ μ_min / (2 L_ξ α √(6d))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CTrackingCeiling {
    pub initial_gap_sq: f64,
    pub mu_min: f64,
    pub mu0: f64,
    pub dim: usize,
    pub min_batch: usize,
}

impl CTrackingCeiling {
    pub fn at(&self, tc: &TheoryConstants, k: usize) -> f64 {
        let d = self.dim as f64;
        let l_f = tc.l_f();
        0.5f64.powi(k.min(i32::MAX as usize) as i32) * self.initial_gap_sq
            + self.mu_min.powi(2) * self.mu0.powi(2) * tc.h_f.powi(2) * (d + 6.0).powi(3)
                / (2.0 * d)
            + 2.0 * self.mu_min.powi(2) * (d + 4.0) / d * l_f * l_f
            + 8.0 * tc.l_xi.powi(2) * tc.alpha.powi(2) * self.mu0.powi(2) * d
            + 5.0 * tc.sigma.powi(2) / self.min_batch as f64
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
