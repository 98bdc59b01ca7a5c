use super::{SplitError, SplitModel};
use crate::inference::Trace;
use serde::{Deserialize, Serialize};

/// Paired differences `h(θ_a) − h(θ_b)`, indexed `(chain, component, draw)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSamples {
    pub labels: Vec<String>,
    chains: Vec<Vec<Vec<f64>>>,
}

impl DeltaSamples {
    /// Builds from `(chain, component, draw)` data. Panics on ragged input.
    pub fn new(labels: Vec<String>, chains: Vec<Vec<Vec<f64>>>) -> DeltaSamples {
        assert!(!chains.is_empty(), "at least one chain");
        let n = chains[0].first().map_or(0, |c| c.len());
        for c in &chains {
            assert_eq!(c.len(), labels.len(), "one series per component");
            assert!(c.iter().all(|s| s.len() == n), "equal lengths");
        }
        DeltaSamples { labels, chains }
    }

    /// Single-chain scalar samples.
    pub fn scalar(values: Vec<f64>) -> DeltaSamples {
        DeltaSamples::new(vec!["delta".into()], vec![vec![values]])
    }

    /// Single chain of vector draws, given as rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> DeltaSamples {
        let k = rows.first().map_or(0, |r| r.len());
        let cols = (0..k).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        DeltaSamples::new((1..=k).map(|j| format!("delta.{j}")).collect(), vec![cols])
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn n_draws(&self) -> usize {
        self.chains[0].first().map_or(0, |c| c.len())
    }

    pub fn total(&self) -> usize {
        self.n_chains() * self.n_draws()
    }

    pub fn series(&self, chain: usize, component: usize) -> &[f64] {
        &self.chains[chain][component]
    }

    /// Component `j` over all chains, in chain order.
    pub fn pooled(&self, j: usize) -> Vec<f64> {
        self.chains.iter().flat_map(|c| c[j].iter().copied()).collect()
    }

    /// Draw `i` of the pooled sequence, as a vector.
    pub fn row(&self, i: usize) -> Vec<f64> {
        let n = self.n_draws();
        let (c, d) = (i / n, i % n);
        self.chains[c].iter().map(|s| s[d]).collect()
    }

    /// Applies `f` to every value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DeltaSamples {
        DeltaSamples {
            labels: self.labels.clone(),
            chains: self
                .chains
                .iter()
                .map(|c| c.iter().map(|s| s.iter().map(|&x| f(x)).collect()).collect())
                .collect(),
        }
    }
}

/// Differences of the separator copies in `trace`, which must come from
/// `split.model`.
pub fn delta_samples(trace: &Trace, split: &SplitModel) -> Result<DeltaSamples, SplitError> {
    let expected = split.model.hash();
    if trace.meta.model_hash != expected {
        return Err(SplitError::HashMismatch { expected, found: trace.meta.model_hash.clone() });
    }
    let mut chains = vec![Vec::with_capacity(split.delta_spec.len()); trace.n_chains()];
    let mut labels = Vec::new();
    for comp in &split.delta_spec {
        let a = trace.chains_of(&comp.a)?;
        let b = trace.chains_of(&comp.b)?;
        let label = format!("{} - {}", comp.a, comp.b);
        for (c, (xa, xb)) in a.iter().zip(&b).enumerate() {
            let d: Vec<f64> = xa
                .iter()
                .zip(xb.iter())
                .map(|(&x, &y)| comp.transform.apply(x) - comp.transform.apply(y))
                .collect();
            if let Some(draw) = d.iter().position(|v| !v.is_finite()) {
                return Err(SplitError::NonFinite { component: label, chain: c + 1, draw: draw + 1 });
            }
            chains[c].push(d);
        }
        labels.push(label);
    }
    Ok(DeltaSamples::new(labels, chains))
}
