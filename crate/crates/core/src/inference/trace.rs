//! Sample storage and its CSV + JSON sidecar persistence.

use super::SamplerConfig;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub config: SamplerConfig,
    pub model_hash: String,
    /// Post-burn-in acceptance rate per updated node, one entry per chain.
    pub acceptance: BTreeMap<String, Vec<f64>>,
    /// Update method used for each node.
    pub update_kinds: BTreeMap<String, String>,
    pub wall_clock_secs: f64,
    pub version: String,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: malformed trace: {message}")]
    Format { path: PathBuf, message: String },
    #[error("trace was produced from model {found}, expected {expected} (use --force to override)")]
    HashMismatch { expected: String, found: String },
    #[error("no column `{0}` in trace")]
    UnknownColumn(String),
}

/// Retained draws indexed `(chain, column, draw)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    columns: Vec<String>,
    data: Vec<Vec<Vec<f64>>>,
    iterations: Vec<u64>,
    pub meta: TraceMeta,
}

/// Sidecar path for a trace CSV: `trace.csv` -> `trace.meta.json`.
pub fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

impl Trace {
    pub fn new(columns: Vec<String>, data: Vec<Vec<Vec<f64>>>, iterations: Vec<u64>, meta: TraceMeta) -> Trace {
        debug_assert!(data.iter().all(|c| c.len() == columns.len()));
        debug_assert!(data.iter().flatten().all(|col| col.len() == iterations.len()));
        Trace { columns, data, iterations, meta }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn n_chains(&self) -> usize {
        self.data.len()
    }

    /// Retained draws per chain.
    pub fn n_draws(&self) -> usize {
        self.iterations.len()
    }

    pub fn iterations(&self) -> &[u64] {
        &self.iterations
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, chain: usize, col: usize) -> &[f64] {
        &self.data[chain][col]
    }

    /// One slice per chain for the named column.
    pub fn chains_of(&self, name: &str) -> Result<Vec<&[f64]>, TraceError> {
        let col = self.column_index(name).ok_or_else(|| TraceError::UnknownColumn(name.to_string()))?;
        Ok(self.data.iter().map(|c| c[col].as_slice()).collect())
    }

    /// All chains of a column concatenated in chain order.
    pub fn pooled(&self, name: &str) -> Result<Vec<f64>, TraceError> {
        Ok(self.chains_of(name)?.concat())
    }

    /// Columns belonging to node `node`: the node itself if scalar, otherwise
    /// its `.i` / `.i.j` components.
    pub fn node_columns(&self, node: &str) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| {
                c.as_str() == node
                    || c.strip_prefix(node).is_some_and(|rest| {
                        rest.starts_with('.') && rest[1..].split('.').all(|p| p.parse::<usize>().is_ok())
                    })
            })
            .cloned()
            .collect()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("chain,iter");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (ch, cols) in self.data.iter().enumerate() {
            for (d, it) in self.iterations.iter().enumerate() {
                out.push_str(&format!("{},{}", ch + 1, it));
                for col in cols {
                    out.push_str(&format!(",{:?}", col[d]));
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn meta_json(&self) -> String {
        serde_json::to_string_pretty(&self.meta).expect("trace metadata serialises") + "\n"
    }

    /// Writes `path` and its sidecar atomically.
    pub fn write(&self, path: &Path) -> Result<(), TraceError> {
        crate::util::write_atomic(path, self.to_csv_string().as_bytes())
            .map_err(|source| TraceError::Io { path: path.to_path_buf(), source })?;
        let mp = meta_path(path);
        crate::util::write_atomic(&mp, self.meta_json().as_bytes()).map_err(|source| TraceError::Io { path: mp, source })
    }

    /// Reads a trace; `expected_hash` is checked against the sidecar unless
    /// `force` is set.
    pub fn read(path: &Path, expected_hash: Option<&str>, force: bool) -> Result<Trace, TraceError> {
        let fmt = |message: String| TraceError::Format { path: path.to_path_buf(), message };
        let mp = meta_path(path);
        let meta: TraceMeta = serde_json::from_str(&std::fs::read_to_string(&mp).map_err(|source| TraceError::Io { path: mp.clone(), source })?)
            .map_err(|e| TraceError::Format { path: mp.clone(), message: e.to_string() })?;
        if let Some(h) = expected_hash {
            if h != meta.model_hash {
                if force {
                    log::warn!("model hash mismatch ignored: trace {} vs model {h}", meta.model_hash);
                } else {
                    return Err(TraceError::HashMismatch { expected: h.to_string(), found: meta.model_hash });
                }
            }
        }
        let mut rdr = csv::Reader::from_path(path).map_err(|e| fmt(e.to_string()))?;
        let header = rdr.headers().map_err(|e| fmt(e.to_string()))?.clone();
        if header.len() < 2 || &header[0] != "chain" || &header[1] != "iter" {
            return Err(fmt("header must start with `chain,iter`".into()));
        }
        let columns: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let mut data: Vec<Vec<Vec<f64>>> = Vec::new();
        let mut iters: Vec<Vec<u64>> = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| fmt(e.to_string()))?;
            let bad = |what: &str| fmt(format!("row {}: bad {what}", line + 2));
            let chain: usize = rec[0].parse().map_err(|_| bad("chain"))?;
            if chain == 0 || chain > data.len() + 1 {
                return Err(bad("chain index"));
            }
            if chain == data.len() + 1 {
                data.push(vec![Vec::new(); columns.len()]);
                iters.push(Vec::new());
            }
            iters[chain - 1].push(rec[1].parse().map_err(|_| bad("iter"))?);
            for (k, field) in rec.iter().skip(2).enumerate() {
                data[chain - 1][k].push(field.parse().map_err(|_| bad("value"))?);
            }
        }
        if data.is_empty() {
            return Err(fmt("no draws".into()));
        }
        if iters.iter().any(|i| *i != iters[0]) {
            return Err(fmt("chains have different iterations".into()));
        }
        Ok(Trace { columns, data, iterations: iters.swap_remove(0), meta })
    }
}
