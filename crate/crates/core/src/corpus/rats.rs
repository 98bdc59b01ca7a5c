//! Growth of 30 rats weighed weekly, with bivariate normal random effects
//! on intercept and slope.

use super::CorpusError;
use crate::graph::{DagModel, DagNode, Expr, Family, Value};
use crate::split::{split_node, Part, SplitModel, SplitSpec};
use nalgebra::DMatrix;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

pub const N_RATS: usize = 30;
pub const AGES: [f64; 5] = [8.0, 15.0, 22.0, 29.0, 36.0];
/// Ages centred on day 22.
pub const TIMES: [f64; 5] = [-14.0, -7.0, 0.0, 7.0, 14.0];

/// SHA-256 of the shipped `data/rats.csv`.
pub const RATS_SHA256: &str = "6516c69a7584773bbc7dce7e649c4665ddc9fb9418bdfe739b3690f748ca86f2";

const EMBEDDED: &str = include_str!("../../data/rats.csv");

#[derive(Debug, Clone, PartialEq)]
pub struct RatsData {
    /// `weights[i][j]`: rat `i` at age `AGES[j]`, in grams.
    pub weights: Vec<[f64; 5]>,
}

#[derive(serde::Deserialize)]
struct Row {
    rat: usize,
    day8: f64,
    day15: f64,
    day22: f64,
    day29: f64,
    day36: f64,
}

impl RatsData {
    /// The copy compiled into the library.
    pub fn embedded() -> RatsData {
        Self::parse(EMBEDDED.as_bytes(), "embedded").expect("embedded rats data is valid")
    }

    /// Reads a rats CSV, checking it against the pinned checksum.
    pub fn load(path: &Path) -> Result<RatsData, CorpusError> {
        let err = |message: String| CorpusError::DataFile { path: path.display().to_string(), message };
        let bytes = std::fs::read(path).map_err(|e| err(e.to_string()))?;
        let found = hex::encode(Sha256::digest(&bytes));
        if found != RATS_SHA256 {
            return Err(CorpusError::Checksum { expected: RATS_SHA256.into(), found });
        }
        Self::parse(&bytes, &path.display().to_string())
    }

    fn parse(bytes: &[u8], path: &str) -> Result<RatsData, CorpusError> {
        let err = |message: String| CorpusError::DataFile { path: path.to_string(), message };
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(bytes);
        let mut weights = Vec::new();
        for (k, row) in reader.deserialize::<Row>().enumerate() {
            let r = row.map_err(|e| err(e.to_string()))?;
            if r.rat != k + 1 {
                return Err(err(format!("row {} has rat id {}", k + 1, r.rat)));
            }
            let w = [r.day8, r.day15, r.day22, r.day29, r.day36];
            if w.iter().any(|x| !(*x > 0.0)) {
                return Err(err(format!("rat {} has a nonpositive weight", r.rat)));
            }
            weights.push(w);
        }
        if weights.len() != N_RATS {
            return Err(err(format!("expected {N_RATS} rats, found {}", weights.len())));
        }
        Ok(RatsData { weights })
    }

    /// Per-rat least-squares `(intercept, slope)` on the centred times.
    pub fn ols(&self, rat: usize) -> [f64; 2] {
        let y = &self.weights[rat - 1];
        let n = TIMES.len() as f64;
        let ybar = y.iter().sum::<f64>() / n;
        let stt: f64 = TIMES.iter().map(|t| t * t).sum();
        let sty: f64 = TIMES.iter().zip(y).map(|(t, y)| t * y).sum();
        [ybar, sty / stt]
    }
}

pub fn phi_node(i: usize) -> String {
    format!("phi[{i}]")
}

pub fn y_node(i: usize, j: usize) -> String {
    format!("y[{i},{j}]")
}

/// The unsplit model: `y_ij ~ N(φ_i1 + φ_i2 t_j, 1/τ)`, `φ_i ~ MVN(β, W)`
/// with `W` a precision, `β ~ MVN(0, 10⁻⁶ I)`, `W ~ Wishart(diag(200, 0.2), 2)`,
/// `τ ~ Gamma(10⁻³, 10⁻³)`.
pub fn build_rats_null(data: &RatsData) -> DagModel {
    let mut constants = BTreeMap::new();
    constants.insert("beta_mean".to_string(), Value::Vector(vec![0.0, 0.0]));
    constants.insert("beta_prec".to_string(), Value::Matrix(DMatrix::from_diagonal_element(2, 2, 1e-6)));
    constants.insert("W_R".to_string(), Value::Matrix(DMatrix::from_row_slice(2, 2, &[200.0, 0.0, 0.0, 0.2])));
    let var = |s: &str| Expr::Var(s.to_string());
    let mut nodes = vec![
        DagNode::stochastic("beta", Family::MultivariateNormal { dim: 2 }, vec![var("beta_mean"), var("beta_prec")])
            .with_init(Value::Vector(vec![240.0, 6.0])),
        DagNode::stochastic("W", Family::Wishart { dim: 2 }, vec![var("W_R"), Expr::Const(2.0)])
            .with_init(Value::Matrix(DMatrix::from_row_slice(2, 2, &[0.005, 0.0, 0.0, 5.0]))),
        DagNode::stochastic("tau", Family::Gamma, vec![Expr::Const(1e-3), Expr::Const(1e-3)])
            .with_init(Value::Scalar(0.03)),
    ];
    for i in 1..=N_RATS {
        let ols = data.ols(i);
        nodes.push(
            DagNode::stochastic(phi_node(i), Family::MultivariateNormal { dim: 2 }, vec![var("beta"), var("W")])
                .with_init(Value::Vector(ols.to_vec())),
        );
    }
    for i in 1..=N_RATS {
        for (j, t) in TIMES.iter().enumerate() {
            let phi = phi_node(i);
            let mean = Expr::parse(&format!("(+ (index {phi} 1) (* (index {phi} 2) {t}))")).expect("valid");
            nodes.push(
                DagNode::stochastic(y_node(i, j + 1), Family::Normal, vec![mean, var("tau")])
                    .observe(Value::Scalar(data.weights[i - 1][j])),
            );
        }
    }
    DagModel::new(nodes, constants, [])
}

/// Cross-validation of rat `holdout`: `φ_a` predicted from the random-effects
/// distribution fitted to the other rats, `φ_b` fitted to the rat's own
/// weights under a flat prior. The rat's data do not feed back into `τ`.
pub fn rats_split(holdout: usize) -> Result<SplitSpec, CorpusError> {
    if !(1..=N_RATS).contains(&holdout) {
        return Err(CorpusError::HoldoutOutOfRange(holdout));
    }
    let mut spec = SplitSpec::anchored(&[&phi_node(holdout)], &y_node(holdout, 1));
    spec.cuts = vec![("tau".to_string(), Part::B)];
    Ok(spec)
}

pub fn build_rats_model(data: &RatsData, holdout: usize) -> Result<SplitModel, CorpusError> {
    let spec = rats_split(holdout)?;
    Ok(split_node(&build_rats_null(data), &spec)?)
}
