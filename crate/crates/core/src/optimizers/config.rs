use serde::{Deserialize, Serialize};

use crate::env::DecisionVector;
use crate::error::{Error, Result};
use crate::variance_reduction::WeightScheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Variance-reduced one-point method.
    Alg1,
    /// Two-point method.
    Alg2,
    /// One-point baseline with zero offset and fixed radius.
    Czo1,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Alg1 => "alg1",
            Method::Alg2 => "alg2",
            Method::Czo1 => "czo1",
        }
    }

    /// Draws charged per unit of batch size.
    pub fn draws_per_batch_unit(self) -> u64 {
        match self {
            Method::Alg2 => 2,
            Method::Alg1 | Method::Czo1 => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BetaSchedule {
    Constant(f64),
    /// `β_k = initial · ratio^(k+1)`.
    Geometric { initial: f64, ratio: f64 },
}

impl BetaSchedule {
    pub fn at(&self, k: usize) -> f64 {
        let beta = match *self {
            BetaSchedule::Constant(beta) => beta,
            BetaSchedule::Geometric { initial, ratio } => {
                initial * ratio.powf(k as f64 + 1.0)
            }
        };
        // keep every emitted step strictly positive once the geometric tail underflows
        beta.max(f64::MIN_POSITIVE)
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            BetaSchedule::Constant(beta) => beta > 0.0 && beta.is_finite(),
            BetaSchedule::Geometric { initial, ratio } => {
                initial > 0.0 && initial.is_finite() && ratio > 0.0 && ratio.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid step schedule {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BatchSchedule {
    Constant(usize),
    /// `m_k = initial + slope · k`.
    Affine { initial: usize, slope: usize },
}

impl BatchSchedule {
    pub fn at(&self, k: usize) -> usize {
        match *self {
            BatchSchedule::Constant(m) => m,
            BatchSchedule::Affine { initial, slope } => initial.saturating_add(slope.saturating_mul(k)),
        }
    }

    fn validate(&self) -> Result<()> {
        let first = match *self {
            BatchSchedule::Constant(m) => m,
            BatchSchedule::Affine { initial, .. } => initial,
        };
        if first < 1 {
            return Err(Error::InvalidArgument("batch sizes must be at least 1".into()));
        }
        Ok(())
    }
}

/// Every tunable of a single optimizer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: Method,
    pub x0: DecisionVector,
    pub mu0: f64,
    pub mu_min: f64,
    /// Radius decay. `1.0` keeps the radius fixed.
    pub gamma: f64,
    pub s_max: usize,
    /// `M` in the history scores `b_i = M‖x - probe_i‖² + 1/m_i`.
    pub distance_weight: f64,
    pub weight_scheme: WeightScheme,
    pub beta: BetaSchedule,
    pub batch: BatchSchedule,
    /// Draws used to estimate the initial offset; `0` means use `c0`.
    pub c0_samples: usize,
    pub c0: f64,
    pub sample_budget: u64,
    pub max_iters: usize,
    pub seed: u64,
}

impl RunConfig {
    /// Defaults of the pricing experiments for the given method.
    pub fn pricing_defaults(method: Method, x0: DecisionVector, seed: u64) -> Self {
        let mut cfg = Self {
            method,
            x0,
            mu0: 0.19,
            mu_min: 1e-4,
            gamma: 0.95,
            s_max: 10,
            distance_weight: 0.1,
            weight_scheme: WeightScheme::Optimal,
            beta: BetaSchedule::Geometric {
                initial: 1e-3,
                ratio: 0.95,
            },
            batch: BatchSchedule::Affine {
                initial: 30,
                slope: 2,
            },
            c0_samples: 20,
            c0: 0.0,
            sample_budget: 5000,
            max_iters: usize::MAX,
            seed,
        };
        if method == Method::Czo1 {
            cfg.mu0 = 1e-3;
            cfg.mu_min = 1e-3;
            cfg.beta = BetaSchedule::Constant(1e-5);
            cfg.c0_samples = 0;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if !(self.mu0 > 0.0 && self.mu0.is_finite()) {
            return bad("mu0 must be positive and finite");
        }
        if self.method != Method::Czo1 && !(self.mu_min > 0.0 && self.mu_min <= self.mu0) {
            return bad("mu_min must satisfy 0 < mu_min <= mu0");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if self.s_max < 1 {
            return bad("s_max must be at least 1");
        }
        if !(self.distance_weight >= 0.0 && self.distance_weight.is_finite()) {
            return bad("distance weight M must be finite and >= 0");
        }
        if !self.c0.is_finite() {
            return bad("c0 must be finite");
        }
        if self.sample_budget < 1 || self.max_iters < 1 {
            return bad("sample budget and max_iters must be at least 1");
        }
        self.beta.validate()?;
        self.batch.validate()
    }
}
