//! JSON model files.
//!
//! ```json
//! {
//!   "constants": { "t": [-14, -7, 0, 7, 14] },
//!   "nodes": [
//!     { "name": "a", "family": "beta", "params": [1, 1] },
//!     { "name": "rest", "kind": "deterministic", "expr": "(- 1 a)", "support": "positive" },
//!     { "name": "y", "family": "binomial", "params": [882, "a"], "observed": 12 }
//!   ],
//!   "cuts": [["a", "y"]]
//! }
//! ```
//!
//! `kind` defaults to `deterministic` when `expr` is present. Normal and
//! multivariate normal nodes take a precision unless `parameterization`
//! says `variance`, `sd` or `covariance`; those are converted on load.

use super::family::{Family, FlatSupport, Transform};
use super::value::{Shape, ValueRepr};
use super::{DagModel, DagNode, Expr, NodeId, NodeKind};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid model JSON at line {line}, column {column}: {message}")]
    Json { line: usize, column: usize, message: String },
    #[error("node `{node}`, {field}: {source}")]
    Expr { node: String, field: String, source: super::ParseError },
    #[error("node `{node}`: {message}")]
    Node { node: String, message: String },
    #[error("constant `{name}`: {message}")]
    Constant { name: String, message: String },
}

impl From<serde_json::Error> for ModelIoError {
    fn from(e: serde_json::Error) -> Self {
        ModelIoError::Json { line: e.line(), column: e.column(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ParamRepr {
    Number(f64),
    Expr(String),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeFile {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    family: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    params: Vec<ParamRepr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    expr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    observed: Option<ValueRepr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shape: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    support: Option<FlatSupport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale: Option<Transform>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parameterization: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    init: Option<ValueRepr>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    improper: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    #[serde(default)]
    constants: BTreeMap<String, ValueRepr>,
    nodes: Vec<NodeFile>,
    #[serde(default)]
    cuts: Vec<(String, String)>,
}

pub fn from_json_str(src: &str) -> Result<DagModel, ModelIoError> {
    let file: ModelFile = serde_json::from_str(src)?;
    build(file)
}

pub fn from_path(path: &Path) -> Result<DagModel, ModelIoError> {
    let src = std::fs::read_to_string(path)
        .map_err(|source| ModelIoError::Io { path: path.display().to_string(), source })?;
    from_json_str(&src)
}

fn build(file: ModelFile) -> Result<DagModel, ModelIoError> {
    let mut constants = BTreeMap::new();
    for (name, v) in file.constants {
        let value = v
            .into_value()
            .map_err(|message| ModelIoError::Constant { name: name.clone(), message })?;
        constants.insert(name, value);
    }
    let nodes = file.nodes.into_iter().map(build_node).collect::<Result<Vec<_>, _>>()?;
    let cuts = file.cuts.into_iter().map(|(p, c)| (NodeId::new(p), NodeId::new(c)));
    Ok(DagModel::new(nodes, constants, cuts))
}

fn build_node(f: NodeFile) -> Result<DagNode, ModelIoError> {
    let node_err = |message: String| ModelIoError::Node { node: f.name.clone(), message };
    let parse = |field: &str, src: &str| {
        Expr::parse(src).map_err(|source| ModelIoError::Expr {
            node: f.name.clone(),
            field: field.to_string(),
            source,
        })
    };
    let declared_shape = match &f.shape {
        Some(dims) => Some(
            Shape::from_dims(dims).ok_or_else(|| node_err(format!("unsupported shape {dims:?}")))?,
        ),
        None => None,
    };
    let kind = f
        .kind
        .clone()
        .unwrap_or_else(|| if f.expr.is_some() { "deterministic".into() } else { "stochastic".into() });
    let value = |v: &Option<ValueRepr>| v.clone().map(|r| r.into_value().map_err(&node_err)).transpose();
    let observed = value(&f.observed)?;
    let init = value(&f.init)?;

    let mut node = match kind.as_str() {
        "deterministic" => {
            let src = f.expr.as_deref().ok_or_else(|| node_err("deterministic node needs `expr`".into()))?;
            if f.family.is_some() || !f.params.is_empty() {
                return Err(node_err("deterministic nodes take no family or params".into()));
            }
            let mut n = DagNode::deterministic(f.name.as_str(), parse("expr", src)?, declared_shape.unwrap_or(Shape::Scalar));
            if let Some(s) = f.support {
                n = n.with_support(s);
            }
            n
        }
        "stochastic" => {
            if f.expr.is_some() {
                return Err(node_err("stochastic nodes take `params`, not `expr`".into()));
            }
            let fam_name = f.family.as_deref().ok_or_else(|| node_err("stochastic node needs `family`".into()))?;
            let mut params = Vec::with_capacity(f.params.len());
            for (k, p) in f.params.iter().enumerate() {
                params.push(match p {
                    ParamRepr::Number(x) => Expr::Const(*x),
                    ParamRepr::Expr(s) => parse(&format!("params[{k}]"), s)?,
                });
            }
            let family = family_from_name(fam_name, declared_shape, &f).map_err(&node_err)?;
            let params = convert_parameterization(family, params, f.parameterization.as_deref())
                .map_err(&node_err)?;
            let mut n = DagNode::stochastic(f.name.as_str(), family, params);
            if let Some(s) = declared_shape {
                // a conflicting declaration is reported by validation
                n.shape = s;
            }
            n
        }
        other => return Err(node_err(format!("unknown kind `{other}`"))),
    };
    node.observed = observed;
    node.init = init;
    node.improper_ok = f.improper;
    Ok(node)
}

fn family_from_name(name: &str, shape: Option<Shape>, f: &NodeFile) -> Result<Family, String> {
    let square = |what: &str| match shape {
        Some(Shape::Matrix(r, c)) if r == c => Ok(r),
        _ => Err(format!("{what} nodes need a square `shape` such as [2, 2]")),
    };
    Ok(match name {
        "bernoulli" => Family::Bernoulli,
        "binomial" => Family::Binomial,
        "beta" => Family::Beta,
        "normal" => Family::Normal,
        "mvnormal" | "multivariate_normal" => match shape {
            Some(Shape::Vector(d)) => Family::MultivariateNormal { dim: d },
            _ => return Err("mvnormal nodes need a vector `shape` such as [2]".into()),
        },
        "gamma" => Family::Gamma,
        "wishart" => Family::Wishart { dim: square("wishart")? },
        "uniform" => Family::Uniform,
        "flat" => Family::ImproperFlat {
            support: f.support.unwrap_or(FlatSupport::Real),
            scale: f.scale.unwrap_or(Transform::Identity),
            dim: match shape {
                None | Some(Shape::Scalar) => 0,
                Some(Shape::Vector(d)) => d,
                Some(s) => return Err(format!("flat priors support scalars and vectors, not {s}")),
            },
        },
        other => return Err(format!("unknown family `{other}`")),
    })
}

fn convert_parameterization(family: Family, mut params: Vec<Expr>, p: Option<&str>) -> Result<Vec<Expr>, String> {
    let Some(p) = p else { return Ok(params) };
    if params.len() != 2 {
        return Ok(params);
    }
    let second = params.pop().unwrap();
    let converted = match (family, p) {
        (Family::Normal | Family::MultivariateNormal { .. }, "precision") => second,
        (Family::Normal, "variance") => Expr::Div(Box::new(Expr::Const(1.0)), Box::new(second)),
        (Family::Normal, "sd") => Expr::Div(
            Box::new(Expr::Const(1.0)),
            Box::new(Expr::Mul(vec![second.clone(), second])),
        ),
        (Family::MultivariateNormal { .. }, "covariance") => Expr::Inverse(Box::new(second)),
        (fam, other) => return Err(format!("parameterization `{other}` is not available for {}", fam.name())),
    };
    params.push(converted);
    Ok(params)
}

fn to_file(model: &DagModel) -> ModelFile {
    let nodes = model
        .nodes()
        .iter()
        .map(|n| {
            let mut f = NodeFile {
                name: n.id.to_string(),
                observed: n.observed.as_ref().map(ValueRepr::from),
                init: n.init.as_ref().map(ValueRepr::from),
                improper: n.improper_ok,
                ..Default::default()
            };
            if n.shape != Shape::Scalar {
                f.shape = Some(n.shape.dims());
            }
            match &n.kind {
                NodeKind::Deterministic { expr, support } => {
                    f.kind = Some("deterministic".into());
                    f.expr = Some(expr.to_string());
                    f.support = *support;
                }
                NodeKind::Stochastic(d) => {
                    f.family = Some(d.family.name().into());
                    f.params = d.params.iter().map(|p| ParamRepr::Expr(p.to_string())).collect();
                    if let Family::ImproperFlat { support, scale, .. } = d.family {
                        f.support = Some(support);
                        f.scale = Some(scale);
                    }
                }
            }
            f
        })
        .collect();
    ModelFile {
        constants: model.constants().iter().map(|(k, v)| (k.clone(), ValueRepr::from(v))).collect(),
        nodes,
        cuts: model.cuts().iter().map(|(p, c)| (p.to_string(), c.to_string())).collect(),
    }
}

/// Models embed in other JSON documents using the model-file layout.
impl Serialize for DagModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        to_file(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for DagModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        build(ModelFile::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// Canonical compact serialisation (used for hashing).
pub fn to_json_string(model: &DagModel) -> String {
    serde_json::to_string(&to_file(model)).expect("model serialises")
}

pub fn to_json_pretty(model: &DagModel) -> String {
    serde_json::to_string_pretty(&to_file(model)).expect("model serialises")
}
