//! Null-model calibration: simulate replicate datasets, run the split and
//! conflict pipeline on each, and test the p-values for uniformity.

mod simulate;

pub use simulate::forward_sample;

use crate::conflict::{conflict, ConflictError, KdeConfig, Method, Selection};
use crate::graph::{DagModel, DagNode, Expr, Family, GraphError, Value, ValueRepr};
use crate::inference::{run_mcmc, ConvergenceReport, InferenceError, SamplerConfig};
use crate::split::{delta_samples, split_node, SplitError, SplitSpec};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

pub const MIN_REPLICATES: usize = 100;
pub const MIN_KS_SAMPLES: usize = 20;
/// Pilot runs with a larger R̂ abort the calibration.
pub const PILOT_RHAT: f64 = 1.1;

/// Asymptotic Kolmogorov–Smirnov constants `c(α)`, critical value `c(α)/√n`.
const KS_CONSTANTS: [(f64, f64); 3] = [(0.10, 1.224), (0.05, 1.358), (0.01, 1.628)];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationScenario {
    #[serde(default)]
    pub name: String,
    /// Null model that is split and fitted on every replicate.
    pub model: DagModel,
    /// Data-generating model; the null model when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<DagModel>,
    /// Generator nodes held at fixed true values instead of drawn from their priors.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fixed: BTreeMap<String, ValueRepr>,
    /// Observed nodes redrawn on each replicate.
    pub data_nodes: Vec<String>,
    pub split: SplitSpec,
    pub n_replicates: usize,
    #[serde(default = "default_sampler")]
    pub sampler: SamplerConfig,
    #[serde(default = "default_selection")]
    pub method: Selection,
    #[serde(default)]
    pub kde: KdeConfig,
}

fn default_sampler() -> SamplerConfig {
    SamplerConfig::new(2, 1000, 2000, 1)
}

fn default_selection() -> Selection {
    Selection::Fixed(Method::TwoSided)
}

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("reading scenario {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("replicate {replicate}: {source}")]
    Split { replicate: usize, source: SplitError },
    #[error("replicate {replicate}: {source}")]
    Inference { replicate: usize, source: InferenceError },
    #[error("replicate {replicate}: {source}")]
    Conflict { replicate: usize, source: ConflictError },
    #[error("pilot run did not converge: R̂ = {rhat:.3} for {column} (limit {PILOT_RHAT})")]
    PilotNonconvergence { column: String, rhat: f64 },
    #[error(transparent)]
    Ks(#[from] KsError),
}

impl CalibrationScenario {
    pub fn from_json_str(src: &str) -> Result<CalibrationScenario, CalibrationError> {
        serde_json::from_str(src).map_err(|e| CalibrationError::InvalidScenario(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<CalibrationScenario, CalibrationError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| CalibrationError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_json_str(&src)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }

    pub fn check(&self) -> Result<(), CalibrationError> {
        let bad = |m: String| Err(CalibrationError::InvalidScenario(m));
        if self.n_replicates < MIN_REPLICATES {
            return bad(format!("n_replicates must be at least {MIN_REPLICATES}, got {}", self.n_replicates));
        }
        if self.data_nodes.is_empty() {
            return bad("no data nodes".into());
        }
        let generator = self.generator.as_ref().unwrap_or(&self.model);
        for d in &self.data_nodes {
            match self.model.node(d) {
                Some(n) if n.is_observed() => {}
                Some(_) => return bad(format!("data node `{d}` is not observed in the model")),
                None => return bad(format!("unknown data node `{d}`")),
            }
            if generator.node(d).is_none_or(|n| !n.is_stochastic()) {
                return bad(format!("generator has no stochastic node `{d}`"));
            }
        }
        for f in self.fixed.keys() {
            if generator.node(f).is_none() {
                return bad(format!("unknown fixed node `{f}`"));
            }
        }
        self.sampler.check().map_err(|e| CalibrationError::InvalidScenario(e.to_string()))
    }

    fn fixed_values(&self) -> Result<BTreeMap<String, Value>, CalibrationError> {
        self.fixed
            .iter()
            .map(|(k, v)| {
                let v = v.clone().into_value().map_err(|m| CalibrationError::InvalidScenario(format!("{k}: {m}")))?;
                Ok((k.clone(), v))
            })
            .collect()
    }
}

/// One replicate: draw data, refit the null model, split, sample, test.
fn replicate(
    scenario: &CalibrationScenario,
    fixed: &BTreeMap<String, Value>,
    seed: u64,
    r: usize,
    pilot: bool,
) -> Result<f64, CalibrationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    let generator = scenario.generator.as_ref().unwrap_or(&scenario.model);
    let draw = forward_sample(generator, fixed, &mut rng)?;
    let nodes: Vec<DagNode> = scenario
        .model
        .nodes()
        .iter()
        .map(|n| match scenario.data_nodes.iter().any(|d| d == n.id.as_str()) {
            true => n.clone().observe(draw[n.id.as_str()].clone()),
            false => n.clone(),
        })
        .collect();
    let model = DagModel::new(nodes, scenario.model.constants().clone(), scenario.model.cuts().iter().cloned());
    let split = split_node(&model, &scenario.split).map_err(|source| CalibrationError::Split { replicate: r, source })?;
    let config = SamplerConfig { seed: rng.next_u64(), ..scenario.sampler.clone() };
    let trace = run_mcmc(&split.model, &config).map_err(|source| CalibrationError::Inference { replicate: r, source })?;
    if pilot {
        let report = ConvergenceReport::from_trace(&trace);
        if let Some(worst) = report
            .columns
            .iter()
            .filter_map(|c| c.rhat.filter(|r| !r.degenerate).map(|h| (c.column.clone(), h.value)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
        {
            if !(worst.1 < PILOT_RHAT) {
                return Err(CalibrationError::PilotNonconvergence { column: worst.0, rhat: worst.1 });
            }
        }
    }
    let delta = delta_samples(&trace, &split).map_err(|source| CalibrationError::Split { replicate: r, source })?;
    let method = scenario.method.resolve(&delta);
    let result = conflict(&delta, method, &scenario.kde).map_err(|source| CalibrationError::Conflict { replicate: r, source })?;
    Ok(result.p_value)
}

/// Conflict p-values for every replicate, in replicate order. Replicate 0
/// doubles as the pilot run and must pass the R̂ gate.
pub fn run_calibration(scenario: &CalibrationScenario, seed: u64) -> Result<Vec<f64>, CalibrationError> {
    scenario.check()?;
    let fixed = scenario.fixed_values()?;
    let first = replicate(scenario, &fixed, seed, 0, true)?;
    let rest: Vec<f64> = (1..scenario.n_replicates)
        .into_par_iter()
        .map(|r| replicate(scenario, &fixed, seed, r, false))
        .collect::<Result<_, _>>()?;
    Ok(std::iter::once(first).chain(rest).collect())
}

#[derive(Debug, Error, PartialEq)]
pub enum KsError {
    #[error("need at least {MIN_KS_SAMPLES} p-values, got {0}")]
    TooFew(usize),
    #[error("p-value {0} outside [0, 1]")]
    OutOfRange(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub n: usize,
    pub statistic: f64,
    /// Asymptotic p-value of the statistic.
    pub p_value: f64,
    /// `(α, critical value)` at α = 0.10, 0.05, 0.01.
    pub critical_values: Vec<(f64, f64)>,
}

impl KsResult {
    pub fn critical(&self, alpha: f64) -> Option<f64> {
        self.critical_values.iter().find(|(a, _)| (*a - alpha).abs() < 1e-12).map(|(_, c)| *c)
    }

    /// True when uniformity is rejected at `alpha` (one of the tabulated levels).
    pub fn rejects(&self, alpha: f64) -> bool {
        self.critical(alpha).is_some_and(|c| self.statistic >= c)
    }
}

/// One-sample Kolmogorov–Smirnov test of `pvalues` against U(0, 1).
pub fn ks_uniformity(pvalues: &[f64]) -> Result<KsResult, KsError> {
    let n = pvalues.len();
    if n < MIN_KS_SAMPLES {
        return Err(KsError::TooFew(n));
    }
    if let Some(&p) = pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(KsError::OutOfRange(p));
    }
    let mut x = pvalues.to_vec();
    x.sort_by(f64::total_cmp);
    let nf = n as f64;
    let statistic = x
        .iter()
        .enumerate()
        .map(|(i, &p)| ((i + 1) as f64 / nf - p).max(p - i as f64 / nf))
        .fold(0.0, f64::max);
    let sq = nf.sqrt();
    Ok(KsResult {
        n,
        statistic,
        p_value: kolmogorov_sf((sq + 0.12 + 0.11 / sq) * statistic),
        critical_values: KS_CONSTANTS.iter().map(|&(a, c)| (a, c / sq)).collect(),
    })
}

/// `Pr(K > λ)` for the Kolmogorov distribution.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Built-in scenarios on a normal–normal hierarchy with known variances:
/// `μ ~ N(0, 1)`, `θ_i ~ N(μ, 1)`, `y_i ~ N(θ_i, 1)` for five groups, split at
/// `θ_1` with `y_1` alone in partition b.
pub mod normal {
    use super::*;

    pub const GROUPS: usize = 5;

    fn hierarchy(obs_precision: f64, shift: f64) -> DagModel {
        let mut nodes = vec![DagNode::stochastic("mu", Family::Normal, vec![Expr::Const(0.0), Expr::Const(1.0)])];
        for i in 1..=GROUPS {
            nodes.push(DagNode::stochastic(
                format!("theta[{i}]"),
                Family::Normal,
                vec![Expr::Var("mu".into()), Expr::Const(1.0)],
            ));
        }
        for i in 1..=GROUPS {
            let theta = Expr::Var(format!("theta[{i}]"));
            let mean = if i == 1 && shift != 0.0 { Expr::Add(vec![theta, Expr::Const(shift)]) } else { theta };
            nodes.push(
                DagNode::stochastic(format!("y[{i}]"), Family::Normal, vec![mean, Expr::Const(obs_precision)])
                    .observe(Value::Scalar(0.0)),
            );
        }
        DagModel::new(nodes, BTreeMap::new(), [])
    }

    fn scenario(name: &str, n_replicates: usize, generator: Option<DagModel>) -> CalibrationScenario {
        CalibrationScenario {
            name: name.into(),
            model: hierarchy(1.0, 0.0),
            generator,
            fixed: BTreeMap::new(),
            data_nodes: (1..=GROUPS).map(|i| format!("y[{i}]")).collect(),
            split: SplitSpec::anchored(&["theta[1]"], "y[1]"),
            n_replicates,
            sampler: default_sampler(),
            method: default_selection(),
            kde: KdeConfig::default(),
        }
    }

    /// Data drawn from the null model itself.
    pub fn null(n_replicates: usize) -> CalibrationScenario {
        scenario("normal-null", n_replicates, None)
    }

    /// `y_1` generated with its mean shifted by `shift` observation sds.
    pub fn shifted(n_replicates: usize, shift: f64) -> CalibrationScenario {
        scenario(&format!("normal-shift-{shift}"), n_replicates, Some(hierarchy(1.0, shift)))
    }

    /// Broken null: parameters held at fixed values and data generated
    /// without observation noise, so every replicate sees the same data.
    pub fn degenerate(n_replicates: usize) -> CalibrationScenario {
        let mut s = scenario("normal-degenerate", n_replicates, Some(hierarchy(1e12, 0.0)));
        s.fixed.insert("mu".into(), ValueRepr::Scalar(0.0));
        for i in 1..=GROUPS {
            s.fixed.insert(format!("theta[{i}]"), ValueRepr::Scalar(0.5 * i as f64));
        }
        s
    }

    /// Names accepted by [`by_name`].
    pub const NAMES: [&str; 3] = ["normal-null", "normal-shift-3", "normal-degenerate"];

    pub fn by_name(name: &str, n_replicates: usize) -> Option<CalibrationScenario> {
        match name {
            "normal-null" => Some(null(n_replicates)),
            "normal-shift-3" => Some(shifted(n_replicates, 3.0)),
            "normal-degenerate" => Some(degenerate(n_replicates)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests;
