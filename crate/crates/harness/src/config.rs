//! Flat `key = value` experiment configuration.
//!
//! Keys carry a section prefix (`env.`, `run.`, `method.`). Blank lines and
//! `#` comments are ignored; unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use ddzo_core::Method;

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BatchKind {
    Mini,
    /// Batch size one.
    B1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MethodVariant {
    pub method: Method,
    pub batch: BatchKind,
}

impl MethodVariant {
    pub const ALL: [MethodVariant; 6] = [
        MethodVariant::new(Method::Alg1, BatchKind::Mini),
        MethodVariant::new(Method::Alg1, BatchKind::B1),
        MethodVariant::new(Method::Alg2, BatchKind::Mini),
        MethodVariant::new(Method::Alg2, BatchKind::B1),
        MethodVariant::new(Method::Czo1, BatchKind::Mini),
        MethodVariant::new(Method::Czo1, BatchKind::B1),
    ];

    pub const fn new(method: Method, batch: BatchKind) -> Self {
        Self { method, batch }
    }

    /// The baseline this variant is tested against; `None` for baselines.
    pub fn baseline(self) -> Option<MethodVariant> {
        match self.method {
            Method::Czo1 => None,
            _ => Some(MethodVariant::new(Method::Czo1, self.batch)),
        }
    }
}

impl fmt::Display for MethodVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let batch = match self.batch {
            BatchKind::Mini => "mini",
            BatchKind::B1 => "b1",
        };
        write!(f, "{}-{batch}", self.method.name())
    }
}

impl FromStr for MethodVariant {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MethodVariant::ALL
            .into_iter()
            .find(|v| v.to_string() == s.trim())
            .ok_or_else(|| HarnessError::Config(format!("unknown method {s:?}")))
    }
}

pub fn parse_methods(list: &str) -> Result<Vec<MethodVariant>, HarnessError> {
    let methods = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<_>, _>>()?;
    if methods.is_empty() {
        return Err(HarnessError::Config("at least one method is required".into()));
    }
    Ok(methods)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricingConfig {
    pub n: usize,
    pub m_buyers: u32,
    /// `None` means `0.1 n`.
    pub a0: Option<f64>,
    pub gamma_sens: f64,
    pub theta_file: Option<PathBuf>,
    pub theta_lo: f64,
    pub theta_hi: f64,
}

impl Default for PricingConfig {
    fn default() -> Self {
        Self {
            n: 10,
            m_buyers: 40,
            a0: None,
            gamma_sens: 1.0,
            theta_file: None,
            theta_lo: 0.5,
            theta_hi: 1.5,
        }
    }
}

/// Isotropic quadratic-with-shift problem.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticConfig {
    pub dim: usize,
    pub shift: f64,
    pub noise_sigma: f64,
}

impl Default for AnalyticConfig {
    fn default() -> Self {
        Self {
            dim: 5,
            shift: 0.5,
            noise_sigma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvConfig {
    Pricing(PricingConfig),
    Analytic(AnalyticConfig),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Seeds {
    List(Vec<u64>),
    Range { base: u64, count: usize },
}

impl Seeds {
    pub fn to_vec(&self) -> Vec<u64> {
        match self {
            Seeds::List(v) => v.clone(),
            Seeds::Range { base, count } => (0..*count as u64).map(|i| base + i).collect(),
        }
    }
}

/// Optimizer hyperparameters shared by every run of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodParams {
    pub mu0: f64,
    pub mu_min: f64,
    pub gamma: f64,
    pub s_max: usize,
    pub distance_weight: f64,
    pub beta0: f64,
    pub beta_ratio: f64,
    pub batch_m0: usize,
    pub batch_slope: usize,
    pub c0_samples: usize,
    pub czo_beta: f64,
    pub czo_mu: f64,
    /// Every coordinate of the starting point.
    pub x0: f64,
}

impl Default for MethodParams {
    fn default() -> Self {
        Self {
            mu0: 0.19,
            mu_min: 1e-4,
            gamma: 0.95,
            s_max: 10,
            distance_weight: 0.1,
            beta0: 1e-3,
            beta_ratio: 0.95,
            batch_m0: 30,
            batch_slope: 2,
            c0_samples: 20,
            czo_beta: 1e-5,
            czo_mu: 1e-3,
            x0: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub env: EnvConfig,
    pub methods: Vec<MethodVariant>,
    pub seeds: Seeds,
    pub budget: u64,
    pub metric_every: usize,
    pub n_eval: usize,
    pub output_dir: PathBuf,
    pub max_iters: Option<usize>,
    pub params: MethodParams,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            env: EnvConfig::Pricing(PricingConfig::default()),
            methods: MethodVariant::ALL.to_vec(),
            seeds: Seeds::Range { base: 0, count: 20 },
            budget: 5000,
            metric_every: 0,
            n_eval: 1000,
            output_dir: PathBuf::from("out"),
            max_iters: None,
            params: MethodParams::default(),
        }
    }
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("line {}: expected key = value", i + 1))
            })?;
            let key = key.trim().to_string();
            if map.insert(key.clone(), (i + 1, value.trim().to_string())).is_some() {
                return Err(HarnessError::Config(format!("line {}: duplicate key {key}", i + 1)));
            }
        }
        Ok(Self { map })
    }

    fn take_raw(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.remove(key)
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, HarnessError> {
        match self.take_raw(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|_| {
                HarnessError::Config(format!("line {line}: invalid value {v:?} for {key}"))
            }),
        }
    }

    fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, HarnessError> {
        Ok(self.take(key)?.unwrap_or(default))
    }

    fn finish(self) -> Result<(), HarnessError> {
        match self.map.into_iter().next() {
            None => Ok(()),
            Some((key, (line, _))) => {
                Err(HarnessError::Config(format!("line {line}: unknown key {key}")))
            }
        }
    }
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut e = Entries::parse(text)?;
        let d = ExperimentSpec::default();

        let kind: String = e.take_or("env.kind", "pricing".to_string())?;
        let env = match kind.as_str() {
            "pricing" => {
                let p = PricingConfig::default();
                EnvConfig::Pricing(PricingConfig {
                    n: e.take_or("env.n", p.n)?,
                    m_buyers: e.take_or("env.m_buyers", p.m_buyers)?,
                    a0: e.take("env.a0")?,
                    gamma_sens: e.take_or("env.gamma_sens", p.gamma_sens)?,
                    theta_file: e.take::<String>("env.theta_file")?.map(PathBuf::from),
                    theta_lo: e.take_or("env.theta_lo", p.theta_lo)?,
                    theta_hi: e.take_or("env.theta_hi", p.theta_hi)?,
                })
            }
            "analytic" => {
                let a = AnalyticConfig::default();
                EnvConfig::Analytic(AnalyticConfig {
                    dim: e.take_or("env.dim", a.dim)?,
                    shift: e.take_or("env.shift", a.shift)?,
                    noise_sigma: e.take_or("env.noise_sigma", a.noise_sigma)?,
                })
            }
            other => return Err(HarnessError::Config(format!("unknown env.kind {other:?}"))),
        };

        let methods = match e.take_raw("run.methods") {
            Some((_, list)) => parse_methods(&list)?,
            None => d.methods.clone(),
        };
        let seeds = match e.take_raw("run.seeds") {
            Some((line, list)) => {
                if e.map.contains_key("run.base_seed") || e.map.contains_key("run.instances") {
                    return Err(HarnessError::Config(format!(
                        "line {line}: run.seeds excludes run.base_seed/run.instances"
                    )));
                }
                let v = list
                    .split(',')
                    .map(|s| s.trim().parse::<u64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| HarnessError::Config(format!("line {line}: bad seed list")))?;
                Seeds::List(v)
            }
            None => Seeds::Range {
                base: e.take_or("run.base_seed", 0)?,
                count: e.take_or("run.instances", 20)?,
            },
        };

        let p = MethodParams::default();
        let params = MethodParams {
            mu0: e.take_or("method.mu0", p.mu0)?,
            mu_min: e.take_or("method.mu_min", p.mu_min)?,
            gamma: e.take_or("method.gamma", p.gamma)?,
            s_max: e.take_or("method.s_max", p.s_max)?,
            distance_weight: e.take_or("method.distance_weight", p.distance_weight)?,
            beta0: e.take_or("method.beta0", p.beta0)?,
            beta_ratio: e.take_or("method.beta_ratio", p.beta_ratio)?,
            batch_m0: e.take_or("method.batch_m0", p.batch_m0)?,
            batch_slope: e.take_or("method.batch_slope", p.batch_slope)?,
            c0_samples: e.take_or("method.c0_samples", p.c0_samples)?,
            czo_beta: e.take_or("method.czo_beta", p.czo_beta)?,
            czo_mu: e.take_or("method.czo_mu", p.czo_mu)?,
            x0: e.take_or("method.x0", p.x0)?,
        };

        let spec = ExperimentSpec {
            env,
            methods,
            seeds,
            budget: e.take_or("run.budget", d.budget)?,
            metric_every: e.take_or("run.metric_every", d.metric_every)?,
            n_eval: e.take_or("run.n_eval", d.n_eval)?,
            output_dir: e
                .take::<String>("run.output_dir")?
                .map(PathBuf::from)
                .unwrap_or(d.output_dir),
            max_iters: e.take("run.max_iters")?,
            params,
        };
        e.finish()?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: &str| Err(HarnessError::Config(msg.to_string()));
        if self.methods.is_empty() {
            return bad("at least one method is required");
        }
        if self.seeds.to_vec().is_empty() {
            return bad("at least one seed is required");
        }
        if self.budget < 1 || self.n_eval < 1 {
            return bad("run.budget and run.n_eval must be at least 1");
        }
        if self.max_iters == Some(0) {
            return bad("run.max_iters must be at least 1");
        }
        match &self.env {
            EnvConfig::Pricing(p) if p.theta_file.is_none() && p.n < 1 => bad("env.n must be at least 1"),
            EnvConfig::Analytic(a) if a.dim < 1 => bad("env.dim must be at least 1"),
            _ => Ok(()),
        }
    }

    /// Canonical text form; `parse(to_text())` is the identity.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        match &self.env {
            EnvConfig::Pricing(p) => {
                put("env.kind", "pricing".into());
                put("env.n", p.n.to_string());
                put("env.m_buyers", p.m_buyers.to_string());
                if let Some(a0) = p.a0 {
                    put("env.a0", a0.to_string());
                }
                put("env.gamma_sens", p.gamma_sens.to_string());
                if let Some(path) = &p.theta_file {
                    put("env.theta_file", path.display().to_string());
                }
                put("env.theta_lo", p.theta_lo.to_string());
                put("env.theta_hi", p.theta_hi.to_string());
            }
            EnvConfig::Analytic(a) => {
                put("env.kind", "analytic".into());
                put("env.dim", a.dim.to_string());
                put("env.shift", a.shift.to_string());
                put("env.noise_sigma", a.noise_sigma.to_string());
            }
        }
        let methods: Vec<String> = self.methods.iter().map(|m| m.to_string()).collect();
        put("run.methods", methods.join(","));
        match &self.seeds {
            Seeds::List(v) => {
                let s: Vec<String> = v.iter().map(|s| s.to_string()).collect();
                put("run.seeds", s.join(","));
            }
            Seeds::Range { base, count } => {
                put("run.base_seed", base.to_string());
                put("run.instances", count.to_string());
            }
        }
        put("run.budget", self.budget.to_string());
        put("run.metric_every", self.metric_every.to_string());
        put("run.n_eval", self.n_eval.to_string());
        put("run.output_dir", self.output_dir.display().to_string());
        if let Some(t) = self.max_iters {
            put("run.max_iters", t.to_string());
        }
        let p = &self.params;
        put("method.mu0", p.mu0.to_string());
        put("method.mu_min", p.mu_min.to_string());
        put("method.gamma", p.gamma.to_string());
        put("method.s_max", p.s_max.to_string());
        put("method.distance_weight", p.distance_weight.to_string());
        put("method.beta0", p.beta0.to_string());
        put("method.beta_ratio", p.beta_ratio.to_string());
        put("method.batch_m0", p.batch_m0.to_string());
        put("method.batch_slope", p.batch_slope.to_string());
        put("method.c0_samples", p.c0_samples.to_string());
        put("method.czo_beta", p.czo_beta.to_string());
        put("method.czo_mu", p.czo_mu.to_string());
        put("method.x0", p.x0.to_string());
        out
    }
}
