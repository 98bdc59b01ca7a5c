//! Structural validation of models.

use super::expr::{parse_number, Operand};
use super::family::Family;
use super::value::{Shape, Value};
use super::{DagModel, NodeKind};
use serde::Serialize;
use std::collections::{BTreeSet, HashSet};
use std::fmt;

/// Largest matrix / vector dimension supported by the dense kernels.
pub const MAX_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind")]
pub enum Violation {
    DuplicateNode { node: String },
    InvalidName { node: String, reason: String },
    AmbiguousName { name: String },
    DanglingReference { node: String, name: String },
    CycleDetected { cycle: Vec<String> },
    ParameterCount { node: String, family: String, expected: usize, found: usize },
    ShapeMismatch { node: String, detail: String },
    UnsupportedDimension { node: String, dim: usize },
    DeterministicObserved { node: String },
    ObservationOutsideSupport { node: String, detail: String },
    CutNotAnEdge { parent: String, child: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind")]
pub enum Warning {
    /// Improper prior on a node not flagged as allowed to carry one.
    ImproperPrior { node: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<Warning>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_cycle(&self) -> bool {
        self.violations.iter().any(|v| matches!(v, Violation::CycleDetected { .. }))
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateNode { node } => write!(f, "duplicate node `{node}`"),
            Violation::InvalidName { node, reason } => write!(f, "invalid node name `{node}`: {reason}"),
            Violation::AmbiguousName { name } => {
                write!(f, "`{name}` is both a node and a constant")
            }
            Violation::DanglingReference { node, name } => {
                write!(f, "node `{node}` references unknown name `{name}`")
            }
            Violation::CycleDetected { cycle } => write!(f, "cycle detected: {}", cycle.join(" -> ")),
            Violation::ParameterCount { node, family, expected, found } => write!(
                f,
                "node `{node}`: {family} takes {expected} parameters, {found} given"
            ),
            Violation::ShapeMismatch { node, detail } => write!(f, "node `{node}`: {detail}"),
            Violation::UnsupportedDimension { node, dim } => {
                write!(f, "node `{node}`: dimension {dim} exceeds the supported maximum {MAX_DIM}")
            }
            Violation::DeterministicObserved { node } => {
                write!(f, "deterministic node `{node}` cannot be observed")
            }
            Violation::ObservationOutsideSupport { node, detail } => {
                write!(f, "observation of `{node}` is outside the support: {detail}")
            }
            Violation::CutNotAnEdge { parent, child } => {
                write!(f, "cut {parent} -> {child} is not an edge of the model")
            }
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "error: {v}")?;
        }
        for w in &self.warnings {
            match w {
                Warning::ImproperPrior { node } => {
                    writeln!(f, "warning: improper prior on `{node}` (not flagged improper)")?
                }
            }
        }
        Ok(())
    }
}

fn name_problem(name: &str) -> Option<String> {
    if name.is_empty() {
        return Some("empty".into());
    }
    if name.chars().any(|c| c.is_whitespace() || c == '(' || c == ')') {
        return Some("contains whitespace or parentheses".into());
    }
    if parse_number(name).is_some() {
        return Some("parses as a number".into());
    }
    None
}

/// Support check that needs no parameter values.
fn intrinsic_support(family: &Family, x: &Value) -> Result<(), String> {
    let all = |pred: &dyn Fn(f64) -> bool| x.components().into_iter().all(pred);
    let ok = match family {
        Family::Bernoulli => all(&|v| v == 0.0 || v == 1.0),
        Family::Binomial => all(&|v| v >= 0.0 && v.fract() == 0.0),
        Family::Beta => all(&|v| v > 0.0 && v < 1.0),
        Family::Gamma => all(&|v| v > 0.0 && v.is_finite()),
        Family::Wishart { .. } => {
            x.as_matrix().and_then(crate::linalg::cholesky).is_some()
                && crate::linalg::is_symmetric(x.as_matrix().unwrap(), 1e-10)
        }
        Family::ImproperFlat { support, .. } => all(&|v| support.contains(v)),
        Family::Normal | Family::MultivariateNormal { .. } | Family::Uniform => all(&|v| v.is_finite()),
    };
    if ok {
        Ok(())
    } else {
        Err(format!("not a valid {} value", family.name()))
    }
}

pub(crate) fn validate(model: &DagModel) -> ValidationReport {
    let mut report = ValidationReport::default();
    let v = &mut report.violations;
    let nodes = model.nodes();
    let constants = model.constants();

    let mut seen = HashSet::new();
    for n in nodes {
        let name = n.id.as_str();
        if !seen.insert(name) {
            v.push(Violation::DuplicateNode { node: name.into() });
        }
        if let Some(reason) = name_problem(name) {
            v.push(Violation::InvalidName { node: name.into(), reason });
        }
        if constants.contains_key(name) {
            v.push(Violation::AmbiguousName { name: name.into() });
        }
    }
    let mut dangling = false;
    for n in nodes {
        for r in n.references() {
            if model.index_of(&r).is_none() && !constants.contains_key(&r) {
                v.push(Violation::DanglingReference { node: n.id.to_string(), name: r });
                dangling = true;
            }
        }
    }
    let order = match model.topo_indices() {
        Ok(o) => Some(o),
        Err(super::GraphError::Cycle(c)) => {
            v.push(Violation::CycleDetected { cycle: c.iter().map(|n| n.to_string()).collect() });
            None
        }
        Err(_) => None,
    };

    let shape_of = |name: &str| {
        model
            .node(name)
            .map(|n| n.shape)
            .or_else(|| constants.get(name).map(|c| c.shape()))
    };
    let mut shapes_ok = !dangling;
    for n in nodes {
        let node = n.id.to_string();
        if n.shape.dims().iter().any(|&d| d > MAX_DIM) {
            let dim = n.shape.dims().into_iter().max().unwrap();
            v.push(Violation::UnsupportedDimension { node: node.clone(), dim });
            shapes_ok = false;
            continue;
        }
        match &n.kind {
            NodeKind::Stochastic(d) => {
                let expected = d.family.param_shapes();
                if d.params.len() != expected.len() {
                    v.push(Violation::ParameterCount {
                        node: node.clone(),
                        family: d.family.name().into(),
                        expected: expected.len(),
                        found: d.params.len(),
                    });
                    shapes_ok = false;
                    continue;
                }
                if n.shape != d.family.value_shape() {
                    v.push(Violation::ShapeMismatch {
                        node: node.clone(),
                        detail: format!(
                            "declared {} but {} values are {}",
                            n.shape,
                            d.family.name(),
                            d.family.value_shape()
                        ),
                    });
                    shapes_ok = false;
                }
                if dangling {
                    continue;
                }
                for (k, (p, want)) in d.params.iter().zip(&expected).enumerate() {
                    match p.infer_shape(&shape_of) {
                        Ok(s) if s == *want => {}
                        Ok(s) => {
                            v.push(Violation::ShapeMismatch {
                                node: node.clone(),
                                detail: format!(
                                    "parameter `{}` is {s}, expected {want}",
                                    d.family.param_names()[k]
                                ),
                            });
                            shapes_ok = false;
                        }
                        Err(detail) => {
                            v.push(Violation::ShapeMismatch { node: node.clone(), detail });
                            shapes_ok = false;
                        }
                    }
                }
                if d.family.is_improper() && !n.improper_ok {
                    report.warnings.push(Warning::ImproperPrior { node: node.clone() });
                }
            }
            NodeKind::Deterministic { expr, .. } => {
                if n.observed.is_some() {
                    v.push(Violation::DeterministicObserved { node: node.clone() });
                }
                if dangling {
                    continue;
                }
                match expr.infer_shape(&shape_of) {
                    Ok(s) if s == n.shape => {}
                    Ok(s) => {
                        v.push(Violation::ShapeMismatch {
                            node: node.clone(),
                            detail: format!("expression is {s}, declared {}", n.shape),
                        });
                        shapes_ok = false;
                    }
                    Err(detail) => {
                        v.push(Violation::ShapeMismatch { node: node.clone(), detail });
                        shapes_ok = false;
                    }
                }
            }
        }
        if let Some(obs) = &n.observed {
            if obs.shape() != n.shape {
                v.push(Violation::ShapeMismatch {
                    node: node.clone(),
                    detail: format!("observation is {}, node is {}", obs.shape(), n.shape),
                });
                shapes_ok = false;
            }
        }
        if let Some(init) = &n.init {
            if init.shape() != n.shape {
                v.push(Violation::ShapeMismatch {
                    node: node.clone(),
                    detail: format!("initial value is {}, node is {}", init.shape(), n.shape),
                });
                shapes_ok = false;
            }
        }
    }

    for (p, c) in model.cuts() {
        let is_edge = match (model.index_of(p.as_str()), model.index_of(c.as_str())) {
            (Some(pi), Some(ci)) => model.parent_indices(ci).contains(&pi),
            _ => false,
        };
        if !is_edge {
            v.push(Violation::CutNotAnEdge { parent: p.to_string(), child: c.to_string() });
        }
    }

    if let (Some(order), true) = (order, shapes_ok) {
        check_observations(model, &order, v);
    }
    report
}

/// Checks observations against their supports, evaluating parameters when
/// they depend only on constants and other observations.
fn check_observations(model: &DagModel, order: &[usize], v: &mut Vec<Violation>) {
    let nodes = model.nodes();
    let mut known: Vec<Option<Value>> = vec![None; nodes.len()];
    let resolve = |name: &str| {
        model
            .index_of(name)
            .map(Operand::Node)
            .or_else(|| model.constants().get(name).cloned().map(Operand::Constant))
    };
    for &i in order {
        let n = &nodes[i];
        let parents_known = model.parent_indices(i).iter().all(|&p| known[p].is_some());
        let eval = |e: &super::Expr| -> Option<Value> {
            let c = e.compile(&resolve).ok()?;
            let slots: Vec<Value> =
                known.iter().map(|k| k.clone().unwrap_or(Value::Scalar(0.0))).collect();
            c.eval(&slots).ok()
        };
        match &n.kind {
            NodeKind::Deterministic { expr, .. } => {
                if parents_known {
                    known[i] = eval(expr);
                }
            }
            NodeKind::Stochastic(d) => {
                let Some(obs) = &n.observed else { continue };
                if let Err(detail) = intrinsic_support(&d.family, obs) {
                    v.push(Violation::ObservationOutsideSupport { node: n.id.to_string(), detail });
                } else {
                    let params: Vec<Option<Value>> = d
                        .params
                        .iter()
                        .map(|p| {
                            let ready = p
                                .vars()
                                .iter()
                                .all(|r| model.index_of(r).is_none_or(|k| known[k].is_some()));
                            if ready {
                                eval(p)
                            } else {
                                None
                            }
                        })
                        .collect();
                    if let Some(detail) = support_violation(&d.family, obs, &params) {
                        v.push(Violation::ObservationOutsideSupport { node: n.id.to_string(), detail });
                    }
                }
                known[i] = Some(obs.clone());
            }
        }
    }
}

/// Checks an observation against whichever parameters are known.
fn support_violation(family: &Family, obs: &Value, params: &[Option<Value>]) -> Option<String> {
    let scalar = |k: usize| params[k].as_ref().and_then(Value::as_scalar);
    let x = obs.as_scalar();
    match (family, x) {
        (Family::Binomial, Some(x)) => {
            if let Some(n) = scalar(0) {
                if x > n {
                    return Some(format!("count {x} exceeds n = {n}"));
                }
            }
        }
        (Family::Uniform, Some(x)) => {
            if let (Some(lo), Some(hi)) = (scalar(0), scalar(1)) {
                if x < lo || x > hi {
                    return Some(format!("{x} is outside [{lo}, {hi}]"));
                }
            }
        }
        _ => {}
    }
    let all: Option<Vec<Value>> = params.iter().cloned().collect();
    let all = all?;
    let lp = family.log_density(obs, &all).unwrap_or(f64::NEG_INFINITY);
    if lp > f64::NEG_INFINITY {
        return None;
    }
    let shown: Vec<String> = family
        .param_names()
        .iter()
        .zip(&all)
        .map(|(name, p)| format!("{name} = {}", display_value(p)))
        .collect();
    Some(format!(
        "{} has zero {} probability given {}",
        display_value(obs),
        family.name(),
        shown.join(", ")
    ))
}

fn display_value(v: &Value) -> String {
    match v {
        Value::Scalar(x) => format!("{x}"),
        other => format!("{:?}", other.components()),
    }
}

/// Names of nodes whose shape is not scalar.
pub fn non_scalar_nodes(model: &DagModel) -> BTreeSet<String> {
    model
        .nodes()
        .iter()
        .filter(|n| n.shape != Shape::Scalar)
        .map(|n| n.id.to_string())
        .collect()
}
