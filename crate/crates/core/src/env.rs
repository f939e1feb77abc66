//! The decision-dependent environment contract.
//!
//! An environment draws outcomes `ξ ~ D(x)` whose law depends on the decision
//! `x`, and evaluates the loss `f(x, ξ)`. Optimizers see an environment only
//! through an [`EnvHandle`], which counts every draw on a [`SampleLedger`].

use std::ops::Deref;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite point in `R^d`, `d >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DecisionVector(Vec<f64>);

impl DecisionVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteDecision { index });
        }
        Ok(Self(values))
    }

    pub fn filled(dim: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn distance_sq(&self, other: &DecisionVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// `self + scale * direction`, rejecting non-finite results.
    pub fn offset(&self, direction: &[f64], scale: f64) -> Result<Self> {
        if direction.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: direction.len(),
            });
        }
        Self::new(
            self.0
                .iter()
                .zip(direction)
                .map(|(x, u)| x + scale * u)
                .collect(),
        )
    }
}

impl Deref for DecisionVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for DecisionVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<DecisionVector> for Vec<f64> {
    fn from(x: DecisionVector) -> Self {
        x.0
    }
}

/// Outcomes drawn at one probe point.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch<O> {
    probe: DecisionVector,
    outcomes: Vec<O>,
}

impl<O> SampleBatch<O> {
    pub fn new(probe: DecisionVector, outcomes: Vec<O>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::InvalidArgument("sample batch must be nonempty".into()));
        }
        Ok(Self { probe, outcomes })
    }

    pub fn probe(&self) -> &DecisionVector {
        &self.probe
    }

    pub fn outcomes(&self) -> &[O] {
        &self.outcomes
    }

    pub fn batch_size(&self) -> usize {
        self.outcomes.len()
    }
}

/// Environment behavior. `eval_f` must be a pure function of `(x, ξ)`.
pub trait Environment {
    type Outcome: Clone + std::fmt::Debug;

    fn dim(&self) -> usize;

    /// Draw one outcome from `D(x)`.
    fn draw<R: Rng + ?Sized>(&self, x: &DecisionVector, rng: &mut R) -> Result<Self::Outcome>;

    fn eval_f(&self, x: &DecisionVector, outcome: &Self::Outcome) -> f64;
}

/// Count of individual outcome draws.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleLedger {
    total_draws: u64,
}

impl SampleLedger {
    pub fn total_draws(&self) -> u64 {
        self.total_draws
    }

    fn record(&mut self, draws: u64) {
        self.total_draws += draws;
    }
}

/// An environment paired with its own sample ledger.
#[derive(Debug, Clone)]
pub struct EnvHandle<E> {
    env: E,
    ledger: SampleLedger,
}

pub fn register_env<E: Environment>(env: E) -> Result<EnvHandle<E>> {
    let dim = env.dim();
    if dim < 1 {
        return Err(Error::InvalidDimension(dim));
    }
    Ok(EnvHandle {
        env,
        ledger: SampleLedger::default(),
    })
}

impl<E: Environment> EnvHandle<E> {
    pub fn dim(&self) -> usize {
        self.env.dim()
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    pub fn ledger(&self) -> SampleLedger {
        self.ledger
    }

    /// A second handle over a copy of the same environment with a fresh
    /// ledger, for draws that must be accounted separately.
    pub fn fork(&self) -> Self
    where
        E: Clone,
    {
        Self {
            env: self.env.clone(),
            ledger: SampleLedger::default(),
        }
    }

    /// Draw `m` outcomes at `x`. Each successful draw is charged to the ledger.
    pub fn sample<R: Rng + ?Sized>(
        &mut self,
        x: &DecisionVector,
        m: usize,
        rng: &mut R,
    ) -> Result<SampleBatch<E::Outcome>> {
        if m < 1 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        self.check_dim(x)?;
        let mut outcomes = Vec::with_capacity(m);
        for _ in 0..m {
            outcomes.push(self.env.draw(x, rng)?);
            self.ledger.record(1);
        }
        SampleBatch::new(x.clone(), outcomes)
    }

    pub fn eval_f(&self, x: &DecisionVector, outcome: &E::Outcome) -> f64 {
        self.env.eval_f(x, outcome)
    }

    /// Mean of `f(x, ξ)` over `n` fresh draws at `x`.
    pub fn mean_objective<R: Rng + ?Sized>(
        &mut self,
        x: &DecisionVector,
        n: usize,
        rng: &mut R,
    ) -> Result<f64> {
        let batch = self.sample(x, n, rng)?;
        Ok(running_mean(
            batch.outcomes().iter().map(|xi| self.env.eval_f(x, xi)),
        ))
    }

    pub fn check_dim(&self, x: &DecisionVector) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.dim(),
            });
        }
        Ok(())
    }
}

/// Incremental mean; a constant sequence yields that constant exactly.
pub(crate) fn running_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut mean = 0.0;
    for (i, v) in values.into_iter().enumerate() {
        mean += (v - mean) / (i + 1) as f64;
    }
    mean
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{ConstantEnv, QuadraticShiftOracle};
    use crate::pricing::{PricingEnv, PricingEnvSpec};
    use crate::rng::split_rng;

    #[test]
    fn decision_vector_rejects_bad_input() {
        assert_eq!(DecisionVector::new(vec![]), Err(Error::InvalidDimension(0)));
        assert_eq!(
            DecisionVector::new(vec![1.0, f64::NAN]),
            Err(Error::NonFiniteDecision { index: 1 })
        );
        assert!(DecisionVector::new(vec![0.0]).is_ok());
    }

    #[test]
    fn decision_vector_serde_validates() {
        let x: DecisionVector = serde_json::from_str("[1.0, 2.5]").unwrap();
        assert_eq!(x.as_slice(), &[1.0, 2.5]);
        assert!(serde_json::from_str::<DecisionVector>("[]").is_err());
    }

    #[test]
    fn fresh_handle_has_empty_ledger() {
        let h = register_env(QuadraticShiftOracle::isotropic(5, 0.5, 1.0)).unwrap();
        assert_eq!(h.ledger().total_draws(), 0);
        assert_eq!(h.dim(), 5);
    }

    #[test]
    fn pricing_handle_dim() {
        let spec = PricingEnvSpec::with_theta(vec![1.0; 10], 40).unwrap();
        let h = register_env(PricingEnv::new(spec)).unwrap();
        assert_eq!(h.dim(), 10);
    }

    #[test]
    fn zero_dim_rejected() {
        struct Empty;
        impl Environment for Empty {
            type Outcome = ();
            fn dim(&self) -> usize {
                0
            }
            fn draw<R: Rng + ?Sized>(&self, _: &DecisionVector, _: &mut R) -> Result<()> {
                Ok(())
            }
            fn eval_f(&self, _: &DecisionVector, _: &()) -> f64 {
                0.0
            }
        }
        assert!(matches!(register_env(Empty), Err(Error::InvalidDimension(0))));
    }

    #[test]
    fn sample_charges_ledger_and_records_probe() {
        let mut h = register_env(QuadraticShiftOracle::isotropic(2, 0.5, 1.0)).unwrap();
        let mut rng = split_rng(1, 1);
        let x = DecisionVector::new(vec![0.1, -0.3]).unwrap();
        let batch = h.sample(&x, 7, &mut rng).unwrap();
        assert_eq!(h.ledger().total_draws(), 7);
        assert_eq!(batch.batch_size(), 7);
        assert_eq!(batch.outcomes().len(), 7);
        assert_eq!(batch.probe(), &x);
        assert!(h.sample(&x, 0, &mut rng).is_err());
        let wrong = DecisionVector::new(vec![1.0]).unwrap();
        assert!(h.sample(&wrong, 1, &mut rng).is_err());
        assert_eq!(h.ledger().total_draws(), 7);
    }

    #[test]
    fn eval_f_is_pure() {
        let mut h = register_env(QuadraticShiftOracle::isotropic(3, 0.5, 1.0)).unwrap();
        let mut rng = split_rng(3, 1);
        let x = DecisionVector::new(vec![0.2, 0.4, -1.0]).unwrap();
        let batch = h.sample(&x, 1, &mut rng).unwrap();
        let before = h.ledger();
        let xi = &batch.outcomes()[0];
        let first = h.eval_f(&x, xi);
        for _ in 0..1000 {
            assert_eq!(h.eval_f(&x, xi).to_bits(), first.to_bits());
        }
        assert_eq!(h.ledger(), before);
    }

    #[test]
    fn constant_mean_is_exact() {
        let mut h = register_env(ConstantEnv::new(3, 0.1)).unwrap();
        let mut rng = split_rng(0, 0);
        let x = DecisionVector::filled(3, 0.0).unwrap();
        assert_eq!(h.mean_objective(&x, 997, &mut rng).unwrap(), 0.1);
    }

    #[test]
    fn fork_has_separate_ledger() {
        let mut h = register_env(ConstantEnv::new(1, 1.0)).unwrap();
        let mut rng = split_rng(0, 0);
        let x = DecisionVector::filled(1, 0.0).unwrap();
        h.sample(&x, 3, &mut rng).unwrap();
        let mut metric = h.fork();
        metric.sample(&x, 10, &mut rng).unwrap();
        assert_eq!(h.ledger().total_draws(), 3);
        assert_eq!(metric.ledger().total_draws(), 10);
    }
}
