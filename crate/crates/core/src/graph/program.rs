//! Compiled form of a validated model: names resolved to node slots.

use super::expr::{Compiled, EvalError, Operand};
use super::family::{Family, FlatSupport};
use super::value::{Shape, Value};
use super::{DagModel, GraphError, NodeKind};

#[derive(Debug, Clone)]
pub(crate) enum PKind {
    Stoch { family: Family, params: Vec<Compiled> },
    Det(Compiled),
}

#[derive(Debug, Clone)]
pub(crate) struct PNode {
    pub kind: PKind,
    pub shape: Shape,
    pub observed: Option<Value>,
    pub det_support: Option<FlatSupport>,
}

#[derive(Debug, Clone)]
pub(crate) struct Program {
    pub nodes: Vec<PNode>,
    /// Topological order of node slots.
    pub order: Vec<usize>,
}

pub(crate) fn compile_expr(model: &DagModel, e: &super::Expr, node: &str) -> Result<Compiled, GraphError> {
    e.compile(&|name: &str| {
        model
            .index_of(name)
            .map(Operand::Node)
            .or_else(|| model.constants().get(name).cloned().map(Operand::Constant))
    })
    .map_err(|message| GraphError::Contract { node: node.to_string(), message })
}

impl Program {
    pub fn compile(model: &DagModel) -> Result<Program, GraphError> {
        let order = model.topo_indices()?;
        let mut nodes = Vec::with_capacity(model.nodes().len());
        for n in model.nodes() {
            let name = n.id.as_str();
            let (kind, det_support) = match &n.kind {
                NodeKind::Stochastic(d) => (
                    PKind::Stoch {
                        family: d.family,
                        params: d
                            .params
                            .iter()
                            .map(|p| compile_expr(model, p, name))
                            .collect::<Result<_, _>>()?,
                    },
                    None,
                ),
                NodeKind::Deterministic { expr, support } => {
                    (PKind::Det(compile_expr(model, expr, name)?), *support)
                }
            };
            nodes.push(PNode { kind, shape: n.shape, observed: n.observed.clone(), det_support });
        }
        Ok(Program { nodes, order })
    }

    pub fn params(&self, i: usize, values: &[Value]) -> Result<Vec<Value>, EvalError> {
        match &self.nodes[i].kind {
            PKind::Stoch { params, .. } => {
                params.iter().map(|p| p.eval(values)).collect()
            }
            PKind::Det(_) => Ok(Vec::new()),
        }
    }

    /// Log density of stochastic node `i` at its current value; `-inf` when
    /// parameters cannot be evaluated.
    pub fn node_logp(&self, i: usize, values: &[Value]) -> f64 {
        self.node_logp_at(i, &values[i], values)
    }

    pub fn node_logp_at(&self, i: usize, x: &Value, values: &[Value]) -> f64 {
        let PKind::Stoch { family, .. } = &self.nodes[i].kind else {
            return 0.0;
        };
        match self.params(i, values) {
            Ok(p) => family.log_density_unchecked(x, &p),
            Err(_) => f64::NEG_INFINITY,
        }
    }

    pub fn det_value(&self, i: usize, values: &[Value]) -> Result<Value, EvalError> {
        match &self.nodes[i].kind {
            PKind::Det(c) => c.eval(values),
            PKind::Stoch { .. } => Ok(values[i].clone()),
        }
    }

    /// True if a deterministic node's value respects its declared support.
    pub fn det_ok(&self, i: usize, v: &Value) -> bool {
        match (self.nodes[i].det_support, v) {
            (Some(s), Value::Scalar(x)) => s.contains(*x),
            (Some(s), v) => v.components().into_iter().all(|x| s.contains(x)),
            (None, v) => v.is_finite(),
        }
    }

    pub fn refresh_deterministic(&self, values: &mut [Value]) -> Result<(), (usize, EvalError)> {
        for &i in &self.order {
            if matches!(self.nodes[i].kind, PKind::Det(_)) {
                values[i] = self.det_value(i, values).map_err(|e| (i, e))?;
            }
        }
        Ok(())
    }

    /// Sum of stochastic log densities in slot order; `-inf` if a
    /// deterministic constraint is violated.
    pub fn log_joint(&self, values: &[Value]) -> f64 {
        let mut total = 0.0;
        for (i, n) in self.nodes.iter().enumerate() {
            match n.kind {
                PKind::Stoch { .. } => total += self.node_logp(i, values),
                PKind::Det(_) => {
                    if !self.det_ok(i, &values[i]) {
                        return f64::NEG_INFINITY;
                    }
                }
            }
        }
        total
    }
}
