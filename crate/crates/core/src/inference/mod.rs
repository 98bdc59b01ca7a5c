//! Metropolis-within-Gibbs sampling with cut semantics, traces and
//! convergence diagnostics.

pub(crate) mod conjugate;
pub mod diagnostics;
mod engine;
pub mod trace;
pub(crate) mod transform;

pub use diagnostics::{effective_sample_size, ess_single, rhat, ConvergenceReport, DiagnosticError, Rhat};
pub use trace::{Trace, TraceError, TraceMeta};

use crate::graph::{DagModel, EvalError, GraphError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::Instant;
use thiserror::Error;

/// Retained draws per chain below which a warning is logged.
pub const MIN_RETAINED_WARNING: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_chains: usize,
    /// Total iterations per chain, burn-in included.
    pub n_iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Iterations per adaptation batch.
    pub adapt_window: usize,
    pub target_accept_scalar: f64,
    pub target_accept_block: f64,
    /// Use exact draws for recognised conjugate pairs.
    pub use_conjugate: bool,
    /// Nodes to record; every unobserved node when `None`.
    pub monitor: Option<Vec<String>>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_chains: 2,
            n_iterations: 4000,
            burn_in: 2000,
            thin: 1,
            seed: 1,
            adapt_window: 50,
            target_accept_scalar: 0.44,
            target_accept_block: 0.234,
            use_conjugate: true,
            monitor: None,
        }
    }
}

impl SamplerConfig {
    /// `n_chains` chains with `retained` post-burn-in iterations each.
    pub fn new(n_chains: usize, burn_in: usize, retained: usize, seed: u64) -> Self {
        SamplerConfig { n_chains, n_iterations: burn_in + retained, burn_in, seed, ..Default::default() }
    }

    pub fn retained(&self) -> usize {
        self.n_iterations.saturating_sub(self.burn_in) / self.thin.max(1)
    }

    pub fn check(&self) -> Result<(), InferenceError> {
        let bad = |m: &str| Err(InferenceError::InvalidConfig(m.to_string()));
        if self.n_chains == 0 {
            return bad("n_chains must be positive");
        }
        if self.n_iterations == 0 {
            return bad("n_iterations must be positive");
        }
        if self.burn_in >= self.n_iterations {
            return bad("burn_in must be smaller than n_iterations");
        }
        if self.thin == 0 {
            return bad("thin must be positive");
        }
        if self.adapt_window == 0 {
            return bad("adapt_window must be positive");
        }
        for t in [self.target_accept_scalar, self.target_accept_block] {
            if !(t > 0.0 && t < 1.0) {
                return bad("target acceptance rates must lie in (0, 1)");
            }
        }
        if self.retained() < MIN_RETAINED_WARNING {
            log::warn!(
                "only {} retained draws per chain (fewer than {MIN_RETAINED_WARNING})",
                self.retained()
            );
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot initialise: {detail}")]
    InitialDensity { detail: String },
    #[error("sampler stuck at node `{node}` in chain {chain}: acceptance rate {rate} after burn-in")]
    Stuck { node: String, chain: usize, rate: f64 },
    #[error("full conditional of `{node}` is improper or has no mass")]
    ImproperConditional { node: String },
    #[error("evaluating parameters of `{node}`: {source}")]
    Eval { node: String, source: EvalError },
    #[error("unknown monitored node `{0}`")]
    UnknownMonitor(String),
}

/// Runs `config.n_chains` independent chains and assembles their draws.
pub fn run_mcmc(model: &DagModel, config: &SamplerConfig) -> Result<Trace, InferenceError> {
    config.check()?;
    let start = Instant::now();
    let engine = engine::Engine::build(model, config)?;
    let outputs = (0..config.n_chains)
        .into_par_iter()
        .map(|c| engine.run_chain(config, c))
        .collect::<Result<Vec<_>, _>>()?;

    let mut acceptance = BTreeMap::new();
    let mut update_kinds = BTreeMap::new();
    for (k, u) in engine.updates.iter().enumerate() {
        acceptance.insert(u.name.clone(), outputs.iter().map(|o| o.acceptance[k]).collect());
        update_kinds.insert(u.name.clone(), u.kind_name().to_string());
    }
    let iterations = outputs.first().map(|o| o.iterations.clone()).unwrap_or_default();
    let meta = TraceMeta {
        config: config.clone(),
        model_hash: model.hash(),
        acceptance,
        update_kinds,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    Ok(Trace::new(engine.columns.clone(), outputs.into_iter().map(|o| o.columns).collect(), iterations, meta))
}
