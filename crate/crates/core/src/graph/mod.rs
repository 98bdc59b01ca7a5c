//! Directed acyclic graphical models: nodes, families, expressions, validation.

pub mod expr;
pub mod family;
pub mod io;
pub(crate) mod program;
pub mod validate;
pub mod value;

pub use expr::{EvalError, Expr, ParseError};
pub use family::{Family, FlatSupport, Support, Transform};
pub use validate::{ValidationReport, Violation, Warning};
pub use value::{Shape, Value, ValueRepr};

use expr::Operand;
use serde::{Deserialize, Serialize};
use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use thiserror::Error;

/// Node name, optionally carrying a plate index path such as `phi[9]` or `y[9,2]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(name: impl Into<String>) -> Self {
        NodeId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Name without the index path.
    pub fn base(&self) -> &str {
        self.0.split('[').next().unwrap_or(&self.0)
    }

    /// 1-based index path, if the name carries one.
    pub fn indices(&self) -> Option<Vec<usize>> {
        let open = self.0.find('[')?;
        let inner = self.0[open + 1..].strip_suffix(']')?;
        inner.split(',').map(|s| s.trim().parse().ok()).collect()
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Borrow<str> for NodeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

/// A family together with its parameter expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    pub family: Family,
    pub params: Vec<Expr>,
}

impl Distribution {
    pub fn new(family: Family, params: Vec<Expr>) -> Self {
        Distribution { family, params }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Stochastic(Distribution),
    /// A pure function of its parents. `support`, when declared, is a
    /// constraint: assignments pushing the value outside it have zero density.
    Deterministic { expr: Expr, support: Option<FlatSupport> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DagNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub observed: Option<Value>,
    /// Starting value for samplers.
    pub init: Option<Value>,
    pub shape: Shape,
    /// Allows an improper flat prior without a validation warning.
    pub improper_ok: bool,
}

impl DagNode {
    pub fn stochastic(id: impl Into<NodeId>, family: Family, params: Vec<Expr>) -> Self {
        DagNode {
            id: id.into(),
            shape: family.value_shape(),
            kind: NodeKind::Stochastic(Distribution::new(family, params)),
            observed: None,
            init: None,
            improper_ok: false,
        }
    }

    pub fn deterministic(id: impl Into<NodeId>, expr: Expr, shape: Shape) -> Self {
        DagNode {
            id: id.into(),
            kind: NodeKind::Deterministic { expr, support: None },
            observed: None,
            init: None,
            shape,
            improper_ok: false,
        }
    }

    pub fn observe(mut self, value: Value) -> Self {
        self.observed = Some(value);
        self
    }

    pub fn with_init(mut self, value: Value) -> Self {
        self.init = Some(value);
        self
    }

    pub fn with_support(mut self, s: FlatSupport) -> Self {
        if let NodeKind::Deterministic { support, .. } = &mut self.kind {
            *support = Some(s);
        }
        self
    }

    pub fn allow_improper(mut self) -> Self {
        self.improper_ok = true;
        self
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self.kind, NodeKind::Stochastic(_))
    }

    pub fn is_observed(&self) -> bool {
        self.observed.is_some()
    }

    pub fn distribution(&self) -> Option<&Distribution> {
        match &self.kind {
            NodeKind::Stochastic(d) => Some(d),
            NodeKind::Deterministic { .. } => None,
        }
    }

    /// Names referenced by the node's parameters or expression.
    pub fn references(&self) -> BTreeSet<String> {
        match &self.kind {
            NodeKind::Stochastic(d) => d.params.iter().flat_map(|p| p.vars()).collect(),
            NodeKind::Deterministic { expr, .. } => expr.vars(),
        }
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("cycle detected through {}", .0.iter().map(|n| n.as_str()).collect::<Vec<_>>().join(" -> "))]
    Cycle(Vec<NodeId>),
    #[error("model is not well-formed:\n{0}")]
    Invalid(ValidationReport),
    #[error("node `{node}`: {message}")]
    Contract { node: String, message: String },
    #[error("node `{node}`: {source}")]
    Eval { node: String, source: EvalError },
}

/// An immutable DAG model.
#[derive(Debug, Clone)]
pub struct DagModel {
    nodes: Vec<DagNode>,
    constants: BTreeMap<String, Value>,
    cuts: BTreeSet<(NodeId, NodeId)>,
    index: HashMap<NodeId, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl DagModel {
    /// Builds a model. Structural problems are not rejected here; call
    /// [`DagModel::validate`] to list them.
    pub fn new(
        nodes: Vec<DagNode>,
        constants: BTreeMap<String, Value>,
        cuts: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Self {
        let mut index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            index.entry(n.id.clone()).or_insert(i);
        }
        let mut parents = vec![Vec::new(); nodes.len()];
        let mut children = vec![Vec::new(); nodes.len()];
        for (i, n) in nodes.iter().enumerate() {
            for name in n.references() {
                if let Some(&p) = index.get(name.as_str()) {
                    parents[i].push(p);
                    children[p].push(i);
                }
            }
        }
        for c in &mut children {
            c.sort_unstable();
            c.dedup();
        }
        DagModel { nodes, constants, cuts: cuts.into_iter().collect(), index, parents, children }
    }

    pub fn nodes(&self) -> &[DagNode] {
        &self.nodes
    }

    pub fn constants(&self) -> &BTreeMap<String, Value> {
        &self.constants
    }

    pub fn cuts(&self) -> &BTreeSet<(NodeId, NodeId)> {
        &self.cuts
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn node(&self, id: &str) -> Option<&DagNode> {
        self.index_of(id).map(|i| &self.nodes[i])
    }

    fn require(&self, id: &str) -> Result<usize, GraphError> {
        self.index_of(id).ok_or_else(|| GraphError::UnknownNode(id.to_string()))
    }

    pub(crate) fn parent_indices(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub(crate) fn child_indices(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn parents(&self, id: &str) -> Result<Vec<NodeId>, GraphError> {
        let i = self.require(id)?;
        Ok(self.parents[i].iter().map(|&p| self.nodes[p].id.clone()).collect())
    }

    pub fn children(&self, id: &str) -> Result<Vec<NodeId>, GraphError> {
        let i = self.require(id)?;
        Ok(self.children[i].iter().map(|&c| self.nodes[c].id.clone()).collect())
    }

    /// True if the edge `parent -> child` is cut.
    pub fn is_cut(&self, parent: &str, child: &str) -> bool {
        self.cuts.contains(&(NodeId::new(parent), NodeId::new(child)))
    }

    pub(crate) fn is_cut_idx(&self, parent: usize, child: usize) -> bool {
        !self.cuts.is_empty()
            && self.cuts.contains(&(self.nodes[parent].id.clone(), self.nodes[child].id.clone()))
    }

    pub fn validate(&self) -> ValidationReport {
        validate::validate(self)
    }

    /// Node indices in topological order, ties broken by name.
    pub(crate) fn topo_indices(&self) -> Result<Vec<usize>, GraphError> {
        let n = self.nodes.len();
        let mut indegree: Vec<usize> = self.parents.iter().map(|p| p.len()).collect();
        let mut ready: BTreeSet<(&str, usize)> = BTreeSet::new();
        for i in 0..n {
            if indegree[i] == 0 {
                ready.insert((self.nodes[i].id.as_str(), i));
            }
        }
        let mut out = Vec::with_capacity(n);
        while let Some(first) = ready.pop_first() {
            let i = first.1;
            out.push(i);
            for &c in &self.children[i] {
                // parents may list a node twice if referenced twice
                let k = self.parents[c].iter().filter(|&&p| p == i).count();
                indegree[c] -= k;
                if indegree[c] == 0 {
                    ready.insert((self.nodes[c].id.as_str(), c));
                }
            }
        }
        if out.len() < n {
            return Err(GraphError::Cycle(self.find_cycle(&out)));
        }
        Ok(out)
    }

    fn find_cycle(&self, done: &[usize]) -> Vec<NodeId> {
        let done: BTreeSet<usize> = done.iter().copied().collect();
        let remaining: Vec<usize> = (0..self.nodes.len()).filter(|i| !done.contains(i)).collect();
        // every remaining node has a remaining parent; walk parents until a repeat
        let mut path = vec![remaining[0]];
        let mut seen = HashMap::from([(remaining[0], 0usize)]);
        loop {
            let cur = *path.last().unwrap();
            let next = *self.parents[cur].iter().find(|p| !done.contains(p)).unwrap();
            if let Some(&pos) = seen.get(&next) {
                let mut cycle: Vec<NodeId> =
                    path[pos..].iter().rev().map(|&i| self.nodes[i].id.clone()).collect();
                cycle.push(cycle[0].clone());
                return cycle;
            }
            seen.insert(next, path.len());
            path.push(next);
        }
    }

    /// Every node after all of its parents; deterministic tie-break by name.
    pub fn topological_order(&self) -> Result<Vec<NodeId>, GraphError> {
        Ok(self.topo_indices()?.into_iter().map(|i| self.nodes[i].id.clone()).collect())
    }

    /// Stochastic parents, children and co-parents of `id`, with deterministic
    /// nodes collapsed; the deterministic intermediates linking them are
    /// included as well.
    pub fn markov_blanket(&self, id: &str) -> Result<BTreeSet<NodeId>, GraphError> {
        let v = self.require(id)?;
        let mut out: BTreeSet<usize> = BTreeSet::new();
        let (up, up_dets) = self.stochastic_reach(v, Direction::Up);
        let (down, down_dets) = self.stochastic_reach(v, Direction::Down);
        out.extend(up.iter().chain(&up_dets).chain(&down).chain(&down_dets));
        for &c in &down {
            let (cp, cp_dets) = self.stochastic_reach(c, Direction::Up);
            out.extend(cp.iter().chain(&cp_dets));
        }
        out.remove(&v);
        Ok(out.into_iter().map(|i| self.nodes[i].id.clone()).collect())
    }

    /// Stochastic nodes reachable from `v` through deterministic nodes only,
    /// plus the deterministic nodes traversed.
    pub(crate) fn stochastic_reach(&self, v: usize, dir: Direction) -> (BTreeSet<usize>, BTreeSet<usize>) {
        let mut stoch = BTreeSet::new();
        let mut dets = BTreeSet::new();
        let next = |i: usize| match dir {
            Direction::Up => &self.parents[i],
            Direction::Down => &self.children[i],
        };
        let mut stack: Vec<usize> = next(v).to_vec();
        while let Some(i) = stack.pop() {
            if self.nodes[i].is_stochastic() {
                stoch.insert(i);
            } else if dets.insert(i) {
                stack.extend(next(i));
            }
        }
        (stoch, dets)
    }

    fn resolve_operand<'a>(
        &'a self,
        extra: &'a dyn Fn(&str) -> Option<usize>,
    ) -> impl Fn(&str) -> Option<Operand> + 'a {
        move |name: &str| {
            extra(name)
                .map(Operand::Node)
                .or_else(|| self.constants.get(name).cloned().map(Operand::Constant))
        }
    }

    /// Log density of a stochastic node at `value`, given values for the
    /// nodes its parameters reference.
    pub fn log_density(
        &self,
        id: &str,
        value: &Value,
        parent_values: &BTreeMap<String, Value>,
    ) -> Result<f64, GraphError> {
        let i = self.require(id)?;
        let node = &self.nodes[i];
        let contract = |message: String| GraphError::Contract { node: id.to_string(), message };
        let Some(dist) = node.distribution() else {
            return Err(contract("deterministic nodes have no density".into()));
        };
        let names: Vec<&String> = parent_values.keys().collect();
        let vals: Vec<Value> = parent_values.values().cloned().collect();
        let lookup_name = |n: &str| names.iter().position(|m| m.as_str() == n);
        let resolve = self.resolve_operand(&lookup_name);
        let mut params = Vec::with_capacity(dist.params.len());
        for p in &dist.params {
            let c = p.compile(&resolve).map_err(contract)?;
            let v = c
                .eval(&vals)
                .map_err(|source| GraphError::Eval { node: id.to_string(), source })?;
            params.push(v);
        }
        dist.family.log_density(value, &params).map_err(contract)
    }

    /// Log joint density at a full assignment of the unobserved stochastic
    /// nodes; observed nodes use their observations and deterministic nodes
    /// are evaluated.
    pub fn log_joint(&self, assignment: &BTreeMap<String, Value>) -> Result<f64, GraphError> {
        let prog = self.compile()?;
        let mut values: Vec<Value> = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            let v = match (&n.observed, assignment.get(n.id.as_str())) {
                (Some(obs), _) => obs.clone(),
                (None, Some(v)) => v.clone(),
                (None, None) if n.is_stochastic() => {
                    return Err(GraphError::Contract {
                        node: n.id.to_string(),
                        message: "missing from assignment".into(),
                    })
                }
                (None, None) => Value::zeros(n.shape),
            };
            values.push(v);
        }
        prog.refresh_deterministic(&mut values)
            .map_err(|(i, source)| GraphError::Eval { node: self.nodes[i].id.to_string(), source })?;
        Ok(prog.log_joint(&values))
    }

    pub(crate) fn compile(&self) -> Result<program::Program, GraphError> {
        let report = self.validate();
        if !report.is_ok() {
            return Err(GraphError::Invalid(report));
        }
        program::Program::compile(self)
    }

    /// SHA-256 of the canonical JSON serialisation, hex encoded.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = io::to_json_string(self);
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Direction {
    Up,
    Down,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(s: &str) -> Expr {
        Expr::parse(s).unwrap()
    }

    fn chain() -> DagModel {
        DagModel::new(
            vec![
                DagNode::stochastic("a", Family::Normal, vec![e("0"), e("1")]),
                DagNode::stochastic("b", Family::Normal, vec![e("a"), e("1")]),
                DagNode::stochastic("c", Family::Normal, vec![e("b"), e("1")]),
            ],
            BTreeMap::new(),
            [],
        )
    }

    fn names(ids: impl IntoIterator<Item = NodeId>) -> Vec<String> {
        ids.into_iter().map(|n| n.to_string()).collect()
    }

    #[test]
    fn chain_order_and_blanket() {
        let m = chain();
        assert_eq!(names(m.topological_order().unwrap()), ["a", "b", "c"]);
        assert_eq!(names(m.markov_blanket("b").unwrap()), ["a", "c"]);
        assert!(matches!(m.markov_blanket("zz"), Err(GraphError::UnknownNode(_))));
    }

    #[test]
    fn diamond_order() {
        let m = DagModel::new(
            vec![
                DagNode::stochastic("d", Family::Normal, vec![e("(+ b c)"), e("1")]),
                DagNode::stochastic("c", Family::Normal, vec![e("a"), e("1")]),
                DagNode::stochastic("b", Family::Normal, vec![e("a"), e("1")]),
                DagNode::stochastic("a", Family::Normal, vec![e("0"), e("1")]),
            ],
            BTreeMap::new(),
            [],
        );
        assert_eq!(names(m.topological_order().unwrap()), ["a", "b", "c", "d"]);
    }

    #[test]
    fn cycle_is_reported() {
        let m = DagModel::new(
            vec![
                DagNode::stochastic("a", Family::Normal, vec![e("y"), e("1")]),
                DagNode::stochastic("y", Family::Normal, vec![e("a"), e("1")]),
            ],
            BTreeMap::new(),
            [],
        );
        match m.topological_order() {
            Err(GraphError::Cycle(c)) => assert_eq!(c.len(), 3),
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn hierarchical_blanket_collapses_to_stochastic_neighbours() {
        // theta ~ N(beta, 1); y[j] ~ N(theta, gamma)
        let mut nodes = vec![
            DagNode::stochastic("beta", Family::Normal, vec![e("0"), e("0.01")]),
            DagNode::stochastic("gamma", Family::Gamma, vec![e("1"), e("1")]),
            DagNode::stochastic("theta", Family::Normal, vec![e("beta"), e("1")]),
        ];
        for j in 1..=3 {
            nodes.push(
                DagNode::stochastic(format!("y[{j}]"), Family::Normal, vec![e("theta"), e("gamma")])
                    .observe(Value::Scalar(j as f64)),
            );
        }
        let m = DagModel::new(nodes, BTreeMap::new(), []);
        assert_eq!(names(m.markov_blanket("theta").unwrap()), ["beta", "gamma", "y[1]", "y[2]", "y[3]"]);
    }

    #[test]
    fn node_id_index_path() {
        let id = NodeId::new("y[9,2]");
        assert_eq!(id.base(), "y");
        assert_eq!(id.indices(), Some(vec![9, 2]));
        assert_eq!(NodeId::new("a").indices(), None);
    }

    #[test]
    fn log_joint_is_sum_of_conditionals() {
        // mu ~ N(0, 1); x ~ N(mu, 4); y = 1.5 observed ~ N(x, 2)
        let m = DagModel::new(
            vec![
                DagNode::stochastic("mu", Family::Normal, vec![e("0"), e("1")]),
                DagNode::stochastic("x", Family::Normal, vec![e("mu"), e("4")]),
                DagNode::stochastic("y", Family::Normal, vec![e("x"), e("2")]).observe(Value::Scalar(1.5)),
            ],
            BTreeMap::new(),
            [],
        );
        let (mu, x, y) = (0.3, -0.2, 1.5);
        let ln_n = |v: f64, m: f64, tau: f64| {
            0.5 * tau.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * tau * (v - m) * (v - m)
        };
        let hand = ln_n(mu, 0.0, 1.0) + ln_n(x, mu, 4.0) + ln_n(y, x, 2.0);
        let assignment =
            BTreeMap::from([("mu".to_string(), Value::Scalar(mu)), ("x".to_string(), Value::Scalar(x))]);
        let joint = m.log_joint(&assignment).unwrap();
        assert!((joint - hand).abs() < 1e-13);
        let pv = |pairs: &[(&str, f64)]| -> BTreeMap<String, Value> {
            pairs.iter().map(|(k, v)| (k.to_string(), Value::Scalar(*v))).collect()
        };
        let sum = m.log_density("mu", &Value::Scalar(mu), &pv(&[])).unwrap()
            + m.log_density("x", &Value::Scalar(x), &pv(&[("mu", mu)])).unwrap()
            + m.log_density("y", &Value::Scalar(y), &pv(&[("x", x)])).unwrap();
        assert_eq!(sum.to_bits(), joint.to_bits());
    }
}
