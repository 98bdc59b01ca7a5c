use super::CliError;
use crate::graph::DagModel;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

/// Provenance record written as `manifest.json` into every output directory.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub model_hash: String,
    /// SHA-256 of each spec's canonical JSON, keyed by name.
    pub spec_hashes: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub version: String,
    pub started: String,
    pub finished: String,
    /// Output files, relative to the manifest's directory.
    pub outputs: Vec<String>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn new(command: &str, model: &DagModel, seed: Option<u64>) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            model_hash: model.hash(),
            spec_hashes: BTreeMap::new(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started: now(),
            finished: String::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_spec<T: Serialize>(&mut self, name: &str, spec: &T) {
        let json = serde_json::to_string(spec).expect("spec serialises");
        self.spec_hashes.insert(name.to_string(), hex::encode(Sha256::digest(json.as_bytes())));
    }

    /// Stamps the finish time and writes `manifest.json` into `dir`.
    pub fn finish(mut self, dir: &Path) -> Result<(), CliError> {
        self.finished = now();
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&self).expect("manifest serialises");
        super::write(&path, json.as_bytes())
    }
}
