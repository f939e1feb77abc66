//! Parameter choices under which the convergence guarantees hold.

use serde::{Deserialize, Serialize};

use super::config::Method;
use crate::error::{Error, Result};

/// Problem constants: loss deviation bound `σ`, distribution shift rate `α`,
/// Lipschitz constants `L_ξ` (in the outcome) and `L_x` (in the decision),
/// smoothness `H_F`, and target stationarity `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub sigma: f64,
    pub alpha: f64,
    pub l_xi: f64,
    pub l_x: f64,
    pub h_f: f64,
    pub epsilon: f64,
}

impl TheoryConstants {
    /// Lipschitz constant of `F`: `L_ξ + α L_x`.
    pub fn l_f(&self) -> f64 {
        self.l_xi + self.alpha * self.l_x
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.sigma, self.alpha, self.l_xi, self.l_x, self.h_f, self.epsilon];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument("theory constants must be finite and >= 0".into()));
        }
        if self.h_f <= 0.0 {
            return Err(Error::InvalidArgument("H_F must be positive".into()));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        Ok(())
    }

    /// Step cap that keeps the offset error bounded: `μ_min / (2 L_ξ α √(6d))`.
    /// Infinite when `L_ξ α = 0`.
    pub fn offset_step_cap(&self, dim: usize, mu_min: f64) -> f64 {
        let denom = 2.0 * self.l_xi * self.alpha * (6.0 * dim as f64).sqrt();
        if denom == 0.0 {
            f64::INFINITY
        } else {
            mu_min / denom
        }
    }
}

/// Multipliers for the order-of-magnitude sizing of `μ_min`, `μ₀`, `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryScale {
    pub mu_min: f64,
    pub mu0: f64,
    pub batch: f64,
}

impl Default for TheoryScale {
    fn default() -> Self {
        Self {
            mu_min: 1.0,
            mu0: 1.0,
            batch: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    pub mu_min: f64,
    pub mu0: f64,
    pub batch_size: usize,
    /// `L_ξ²α²/σ²`; only for the one-point method.
    pub distance_weight: Option<f64>,
    pub beta: f64,
}

/// Constant step size for a horizon of `iterations` steps (`T + 1`).
pub fn theory_beta(
    tc: &TheoryConstants,
    dim: usize,
    iterations: usize,
    mu_min: f64,
    method: Method,
) -> Result<f64> {
    tc.validate()?;
    if dim < 1 || iterations < 1 {
        return Err(Error::InvalidArgument("dim and horizon must be at least 1".into()));
    }
    let d = dim as f64;
    let smooth_term = 1.0 / (12.0 * (d + 4.0) * tc.h_f);
    let horizon_term = 1.0 / ((iterations as f64).sqrt() * d.powf(0.75));
    let beta = smooth_term.min(horizon_term);
    match method {
        Method::Alg1 => Ok(beta.min(tc.offset_step_cap(dim, mu_min))),
        Method::Alg2 => Ok(beta),
        Method::Czo1 => Err(Error::InvalidArgument("no theory schedule for czo1".into())),
    }
}

/// `T` is the last iteration index, so the horizon has `T + 1` steps.
pub fn theory_params(
    tc: &TheoryConstants,
    dim: usize,
    last_iter: usize,
    scale: TheoryScale,
    method: Method,
) -> Result<TheoryParams> {
    tc.validate()?;
    if [scale.mu_min, scale.mu0, scale.batch]
        .iter()
        .any(|s| !(s.is_finite() && *s > 0.0))
    {
        return Err(Error::InvalidArgument("scale factors must be positive".into()));
    }
    if scale.mu0 < scale.mu_min {
        return Err(Error::InvalidArgument("mu0 scale must be >= mu_min scale".into()));
    }
    let d = dim as f64;
    let base = tc.epsilon * d.powf(-1.5);
    let mu_min = scale.mu_min * base;
    let mu0 = scale.mu0 * base;
    let raw_batch = scale.batch * d * d / (tc.epsilon * tc.epsilon);
    // absorb representation error so that e.g. 16 / 0.1² gives 1600, not 1601
    let batch_size = ((raw_batch * (1.0 - 1e-12)).ceil() as usize).max(1);
    let distance_weight = match method {
        Method::Alg1 => {
            if tc.sigma == 0.0 {
                return Err(Error::InvalidArgument(
                    "sigma = 0 leaves the distance weight M undefined".into(),
                ));
            }
            Some((tc.l_xi * tc.alpha / tc.sigma).powi(2))
        }
        _ => None,
    };
    let beta = theory_beta(tc, dim, last_iter + 1, mu_min, method)?;
    Ok(TheoryParams {
        mu_min,
        mu0,
        batch_size,
        distance_weight,
        beta,
    })
}
