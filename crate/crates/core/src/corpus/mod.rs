//! Built-in worked examples: a diagnostic-test toy, the HIV prevalence
//! synthesis and the rats growth-curve model.

mod disease;
pub mod hiv;
pub mod rats;

pub use disease::build_disease_test;
pub use hiv::{build_hiv_model, hiv_split_type_a, hiv_split_type_b, HivPrior, HIV_DATA};
pub use rats::{build_rats_model, rats_split, RatsData};

use crate::graph::DagModel;
use crate::split::{SplitError, SplitSpec};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("probability {name} = {value} must lie strictly inside (0, 1)")]
    BoundaryProbability { name: &'static str, value: f64 },
    #[error("test result must be 0 or 1, got {0}")]
    InvalidOutcome(u8),
    #[error("no study informs `{0}` directly")]
    NoDirectEvidence(String),
    #[error("study {0} out of range 1..=12")]
    StudyOutOfRange(usize),
    #[error("holdout {0} out of range 1..=30")]
    HoldoutOutOfRange(usize),
    #[error("rats data {path}: {message}")]
    DataFile { path: String, message: String },
    #[error("rats data checksum mismatch: expected {expected}, found {found}")]
    Checksum { expected: String, found: String },
    #[error("unknown corpus entry `{0}`")]
    Unknown(String),
    #[error(transparent)]
    Split(#[from] SplitError),
}

/// A built-in model together with the split specs defined on it.
#[derive(Debug, Clone)]
pub struct Entry {
    pub id: &'static str,
    pub description: &'static str,
    pub splits: Vec<String>,
}

/// Built-in models and their split ids, for `corpus list`.
pub fn catalog() -> Vec<Entry> {
    vec![
        Entry {
            id: "hiv",
            description: "HIV prevalence synthesis, 12 binomial studies, Beta(1,1) basic parameters",
            splits: hiv::TYPE_A
                .iter()
                .map(|(p, _)| format!("hiv-a:{p}"))
                .chain((1..=12).map(|i| format!("hiv-b:{i}")))
                .collect(),
        },
        Entry {
            id: "hiv-jeffreys",
            description: "HIV synthesis with Beta(1/2,1/2) basic parameters (prior sensitivity)",
            splits: Vec::new(),
        },
        Entry {
            id: "rats",
            description: "rats growth curves, bivariate normal random effects on intercept and slope",
            splits: (1..=30).map(|i| format!("rats:{i}")).collect(),
        },
    ]
}

/// Model named by a corpus id (`hiv`, `hiv-jeffreys`, `rats`).
pub fn model(id: &str) -> Result<DagModel, CorpusError> {
    match id {
        "hiv" => Ok(build_hiv_model(HivPrior::Uniform)),
        "hiv-jeffreys" => Ok(build_hiv_model(HivPrior::Jeffreys)),
        "rats" => Ok(rats::build_rats_null(&RatsData::embedded())),
        other => Err(CorpusError::Unknown(other.to_string())),
    }
}

/// Split spec named by a corpus split id: `hiv-a:<param>`, `hiv-b:<study>`
/// or `rats:<holdout>`.
pub fn split(id: &str) -> Result<SplitSpec, CorpusError> {
    let unknown = || CorpusError::Unknown(id.to_string());
    let (kind, arg) = id.split_once(':').ok_or_else(unknown)?;
    match kind {
        "hiv-a" => hiv_split_type_a(arg),
        "hiv-b" => hiv_split_type_b(arg.parse().map_err(|_| unknown())?),
        "rats" => rats_split(arg.parse().map_err(|_| unknown())?),
        _ => Err(unknown()),
    }
}

#[cfg(test)]
mod tests;
