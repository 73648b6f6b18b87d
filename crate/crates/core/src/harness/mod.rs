//! Monte Carlo experiments.
//!
//! Each experiment turns one asymptotic statement into summary statistics
//! at finite `n`. A run produces [`Row`]s carrying a reference value from
//! theory; tolerances from the configuration turn rows into pass/fail
//! checks. Replications are independent counter-based streams, so reports
//! are bit-identical for any worker count.

mod experiments;
mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::WeightMeasure;
use crate::model::{self, DiffusionModel};

pub use experiments::{
    chi2_delta, chi2_delta_gram_schmidt, density_fit, run_chi2_lemma, run_coupling,
    run_density_tails, run_estimator, run_expansion, run_information, DensityFit,
};
pub use report::{csv_string, write_csv, ExperimentReport, Row};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    Expansion,
    Information,
    Coupling,
    Chi2,
    Density,
    Estimator,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 6] = [
        Self::Expansion,
        Self::Information,
        Self::Coupling,
        Self::Chi2,
        Self::Density,
        Self::Estimator,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Expansion => "expansion",
            Self::Information => "information",
            Self::Coupling => "coupling",
            Self::Chi2 => "chi2",
            Self::Density => "density",
            Self::Estimator => "estimator",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "expansion" | "e1" => Self::Expansion,
            "information" | "e2" | "e3" => Self::Information,
            "coupling" | "e4" => Self::Coupling,
            "chi2" | "e5" => Self::Chi2,
            "density" | "density_tails" | "e6" => Self::Density,
            "estimator" | "e7" => Self::Estimator,
            _ => return Err(Error::Config(format!("unknown experiment '{s}'"))),
        })
    }
}

/// Block-length rule: a fixed `k`, or `k_n = max(2, ⌈log₂ n⌉)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KRule {
    Fixed(usize),
    Log2,
}

impl KRule {
    pub fn block_len(&self, n: usize) -> usize {
        match *self {
            KRule::Fixed(k) => k,
            KRule::Log2 => {
                let bits = usize::BITS - (n.max(1) - 1).leading_zeros();
                (bits as usize).max(2)
            }
        }
    }
}

impl fmt::Display for KRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KRule::Fixed(k) => write!(f, "fixed:{k}"),
            KRule::Log2 => f.write_str("log2"),
        }
    }
}

impl FromStr for KRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "log2" {
            return Ok(KRule::Log2);
        }
        let digits = s.strip_prefix("fixed:").unwrap_or(s);
        digits
            .parse::<usize>()
            .ok()
            .filter(|&k| k >= 1)
            .map(KRule::Fixed)
            .ok_or_else(|| Error::Config(format!("bad k rule '{s}' (use fixed:<k> or log2)")))
    }
}

impl Serialize for KRule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for KRule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Acceptance band for one statistic: `|value - target| ≤ tol`, where the
/// target defaults to the row's theoretical reference and the tolerance is
/// `abs` or `rel · |target|`. `n` restricts the check to one sample size.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

impl Tolerance {
    pub fn abs(tol: f64) -> Self {
        Self {
            abs: Some(tol),
            ..Self::default()
        }
    }

    pub fn rel(tol: f64) -> Self {
        Self {
            rel: Some(tol),
            ..Self::default()
        }
    }

    pub fn at(mut self, n: usize) -> Self {
        self.n = Some(n);
        self
    }

    pub fn with_target(mut self, target: f64) -> Self {
        self.target = Some(target);
        self
    }

    /// Effective `(target, tol)` for a row with the given reference.
    pub fn resolve(&self, reference: Option<f64>) -> Option<(f64, f64)> {
        let target = self.target.or(reference)?;
        let tol = match (self.abs, self.rel) {
            (Some(a), _) => a,
            (None, Some(r)) => r * target.abs(),
            (None, None) => return None,
        };
        Some((target, tol))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub model: String,
    pub measure: WeightMeasure,
    pub theta0: f64,
    #[serde(default)]
    pub h: f64,
    #[serde(default)]
    pub xi0: f64,
    pub n: Vec<usize>,
    pub k: KRule,
    pub m: usize,
    #[serde(rename = "M")]
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub tolerances: BTreeMap<String, Tolerance>,
}

impl ExperimentConfig {
    fn base(experiment: ExperimentId, model: &str, n: Vec<usize>, k: KRule, replications: usize) -> Self {
        Self {
            experiment,
            label: None,
            model: model.to_string(),
            measure: WeightMeasure::lebesgue(),
            theta0: 1.0,
            h: 0.0,
            xi0: 0.0,
            n,
            k,
            m: 32,
            replications,
            seed: 20_240_601,
            tolerances: BTreeMap::new(),
        }
    }

    fn labeled(mut self, label: &str) -> Self {
        self.label = Some(label.to_string());
        self
    }

    fn tol(mut self, stat: &str, tol: Tolerance) -> Self {
        self.tolerances.insert(stat.to_string(), tol);
        self
    }

    /// The configurations that make up an experiment by default, with the
    /// acceptance tolerances attached.
    pub fn defaults(id: ExperimentId) -> Vec<Self> {
        use ExperimentId::*;
        match id {
            Expansion => {
                let mut cfg = Self::base(Expansion, "multiplicative_bm", vec![256, 1024, 4096], KRule::Log2, 2000)
                    .tol("mean_logz", Tolerance::rel(0.15).at(1024))
                    .tol("var_logz", Tolerance::rel(0.15).at(1024))
                    .tol("residual_trend", Tolerance::abs(0.0));
                cfg.h = 1.0;
                vec![cfg]
            }
            Information => vec![
                Self::base(Information, "sine_scale", vec![1024], KRule::Fixed(1), 500)
                    .labeled("k1")
                    .tol("mean_info", Tolerance::rel(0.1)),
                Self::base(Information, "sine_scale", vec![1024], KRule::Fixed(10), 500)
                    .labeled("k10")
                    .tol("mean_info", Tolerance::rel(0.1)),
                Self::base(Information, "sine_scale", vec![4096], KRule::Log2, 500)
                    .labeled("log2")
                    .tol("mean_info", Tolerance::rel(0.1)),
            ],
            Coupling => vec![Self::base(
                Coupling,
                "sine_scale",
                (6..=12).map(|p| 1usize << p).collect(),
                KRule::Fixed(4),
                500,
            )
            .tol("slope", Tolerance::abs(0.15).with_target(-0.5))
            .tol("exact_coupling", Tolerance::abs(0.0))],
            Chi2 => vec![Self::base(Chi2, "multiplicative_bm", vec![7], KRule::Fixed(6), 100_000)
                .tol("mean_delta", Tolerance::abs(0.1))
                .tol("var_delta", Tolerance::abs(0.4))
                .tol("delta_nonnegative", Tolerance::abs(0.0))
                .tol("gram_schmidt_agreement", Tolerance::abs(0.0))],
            Density => vec![
                Self::base(Density, "sine_scale", vec![256], KRule::Fixed(1), 20_000)
                    .labeled("sine_scale")
                    .tol("fit_r2", Tolerance::abs(0.05))
                    .tol("slope_negative", Tolerance::abs(0.0))
                    .tol("exceedance_at_zero", Tolerance::abs(0.0)),
                Self::base(Density, "multiplicative_bm", vec![256], KRule::Fixed(1), 20_000)
                    .labeled("control")
                    .tol("fit_r2", Tolerance::abs(0.01))
                    .tol("slope_negative", Tolerance::abs(0.0))
                    .tol("exceedance_at_zero", Tolerance::abs(0.0)),
            ],
            Estimator => vec![
                Self::base(Estimator, "multiplicative_bm", vec![1024], KRule::Fixed(10), 500)
                    .labeled("augmented")
                    .tol("var_aug", Tolerance::abs(0.095).with_target(0.455))
                    .tol("var_exact", Tolerance::abs(0.1)),
                Self::base(Estimator, "multiplicative_bm", vec![2048], KRule::Fixed(16), 500)
                    .labeled("means_only")
                    .tol("var_obs", Tolerance::abs(0.125)),
                Self::base(Estimator, "cauchy_scale", vec![1024], KRule::Fixed(10), 1000)
                    .labeled("mixed_normal")
                    .tol("skew_std_aug", Tolerance::abs(0.15))
                    .tol("exkurt_std_aug", Tolerance::abs(0.3)),
            ],
        }
    }

    pub fn model(&self) -> Result<&'static DiffusionModel> {
        model::by_name(&self.model)
    }

    /// Checks run before any simulation.
    pub fn validate(&self) -> Result<()> {
        let model = self.model()?;
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n.is_empty() {
            return bad("empty n list".into());
        }
        if self.m < 2 {
            return bad(format!("m = {} must be >= 2", self.m));
        }
        if self.replications < 2 {
            return bad(format!("M = {} must be >= 2", self.replications));
        }
        if self.experiment != ExperimentId::Chi2 {
            model.check_theta(self.theta0).map_err(|e| Error::Config(e.to_string()))?;
        }
        for &n in &self.n {
            if n < 2 {
                return bad(format!("n = {n} must be >= 2"));
            }
            let k = self.k.block_len(n);
            if k > n {
                return bad(format!("k = {k} exceeds n = {n}"));
            }
            let shifted = self.theta0 + self.h / (n as f64).sqrt();
            if self.experiment == ExperimentId::Expansion && !model.theta_interval.contains(shifted) {
                return bad(format!("θ0 + h/√n = {shifted} outside Θ at n = {n}"));
            }
        }
        let needs_pairs = matches!(self.experiment, ExperimentId::Estimator | ExperimentId::Expansion);
        if needs_pairs && self.n.iter().any(|&n| self.k.block_len(n) < 2) {
            return bad("the means-only quasi-score needs k >= 2".into());
        }
        Ok(())
    }
}

/// Run `f` for replications `0..count` on `workers` threads; results keep
/// replication order.
pub fn replicate<T, F>(workers: usize, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| (0..count as u64).into_par_iter().map(&f).collect())
}

/// Run one configuration.
pub fn run(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let rows = match cfg.experiment {
        ExperimentId::Expansion => run_expansion(cfg, workers)?,
        ExperimentId::Information => run_information(cfg, workers)?,
        ExperimentId::Coupling => run_coupling(cfg, workers)?,
        ExperimentId::Chi2 => run_chi2_lemma(cfg, workers)?,
        ExperimentId::Density => run_density_tails(cfg, workers)?,
        ExperimentId::Estimator => run_estimator(cfg, workers)?,
    };
    Ok(ExperimentReport::new(cfg.clone(), rows, start.elapsed().as_secs_f64()))
}
