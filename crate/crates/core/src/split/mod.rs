//! Node splitting: separator copies, evidence partitions and reference priors.

mod delta;

pub use delta::{delta_samples, DeltaSamples};

use crate::graph::{
    DagModel, DagNode, Distribution, Expr, Family, FlatSupport, GraphError, NodeId, NodeKind, Shape, Support,
    Transform,
};
use crate::inference::TraceError;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    A,
    B,
}

impl Part {
    pub fn suffix(&self) -> &'static str {
        match self {
            Part::A => "_a",
            Part::B => "_b",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    A,
    B,
    Shared,
}

impl From<Part> for Label {
    fn from(p: Part) -> Label {
        match p {
            Part::A => Label::A,
            Part::B => Label::B,
        }
    }
}

/// Prior placed on one copy of a separator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefPrior {
    /// The separator's original prior (or definition, if deterministic).
    Keep,
    Jeffreys,
    /// Flat on the given transformed scale.
    Flat(Transform),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefPriors {
    pub a: RefPrior,
    pub b: RefPrior,
}

impl Default for RefPriors {
    fn default() -> Self {
        RefPriors { a: RefPrior::Keep, b: RefPrior::Jeffreys }
    }
}

impl RefPriors {
    fn get(&self, p: Part) -> RefPrior {
        match p {
            Part::A => self.a,
            Part::B => self.b,
        }
    }
}

/// Declaration of a node split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub separators: Vec<String>,
    /// Node whose connected component forms partition b.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<String>,
    /// Explicit partition of the separators' neighbours.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignment: Option<BTreeMap<String, Part>>,
    #[serde(default)]
    pub reference_prior: RefPriors,
    /// Difference transform per separator; the support's natural scale if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transforms: Option<Vec<Transform>>,
    /// Nuisance nodes whose edges into the given partition are cut.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cuts: Vec<(String, Part)>,
}

impl SplitSpec {
    pub fn anchored(separators: &[&str], anchor: &str) -> SplitSpec {
        SplitSpec {
            separators: separators.iter().map(|s| s.to_string()).collect(),
            anchor: Some(anchor.to_string()),
            assignment: None,
            reference_prior: RefPriors::default(),
            transforms: None,
            cuts: Vec::new(),
        }
    }

    pub fn from_json_str(s: &str) -> Result<SplitSpec, SplitError> {
        serde_json::from_str(s).map_err(|e| SplitError::InvalidSpec(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<SplitSpec, SplitError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SplitError::InvalidSpec(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("split spec serialises")
    }
}

/// One component of the difference `h(θ_a) − h(θ_b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaComponent {
    pub a: String,
    pub b: String,
    pub transform: Transform,
}

#[derive(Debug, Clone)]
pub struct SplitModel {
    pub model: DagModel,
    pub labels: BTreeMap<String, Label>,
    pub delta_spec: Vec<DeltaComponent>,
    pub spec: SplitSpec,
}

#[derive(Debug, Error)]
pub enum SplitError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("invalid split specification: {0}")]
    InvalidSpec(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("separator `{0}` is observed")]
    SeparatorObserved(String),
    #[error("anchor `{0}` is a separator")]
    AnchorIsSeparator(String),
    #[error("neighbour `{0}` of the separators is not assigned to a partition")]
    Unassigned(String),
    #[error("evidence is not separable; path: {}", .0.join(" - "))]
    NotSeparable(Vec<String>),
    #[error("partitions are not independent; path: {}", .0.join(" - "))]
    NotIndependent(Vec<String>),
    #[error("reference prior for `{node}`: {detail}")]
    ReferencePriorSupport { node: String, detail: String },
    #[error("transform {transform} does not match the support of `{node}`")]
    TransformMismatch { node: String, transform: Transform },
    #[error("trace was produced from model {found}, split model is {expected}")]
    HashMismatch { expected: String, found: String },
    #[error("difference `{component}` is not finite in chain {chain}, draw {draw}")]
    NonFinite { component: String, chain: usize, draw: usize },
}

/// Jeffreys reference prior for a support and the scale on which it is flat
/// (or, for the unit interval, the scale used for differences).
pub fn jeffreys_reference(support: FlatSupport, dim: usize) -> (Family, Vec<Expr>, Transform) {
    match support {
        FlatSupport::Unit => {
            (Family::Beta, vec![Expr::Const(0.5), Expr::Const(0.5)], Transform::Logit)
        }
        FlatSupport::Positive => (
            Family::ImproperFlat { support, scale: Transform::Log, dim },
            Vec::new(),
            Transform::Log,
        ),
        FlatSupport::Real => (
            Family::ImproperFlat { support, scale: Transform::Identity, dim },
            Vec::new(),
            Transform::Identity,
        ),
    }
}

/// Name of a separator copy: `theta` -> `theta_a`, `phi[9]` -> `phi_a[9]`.
pub fn copy_name(id: &str, part: Part) -> String {
    match id.find('[') {
        Some(i) => format!("{}{}{}", &id[..i], part.suffix(), &id[i..]),
        None => format!("{id}{}", part.suffix()),
    }
}

fn support_of(node: &DagNode) -> Option<FlatSupport> {
    match &node.kind {
        NodeKind::Stochastic(d) => match d.family.support() {
            Support::Real => Some(FlatSupport::Real),
            Support::Positive => Some(FlatSupport::Positive),
            Support::Unit => Some(FlatSupport::Unit),
            _ => None,
        },
        NodeKind::Deterministic { support, .. } => *support,
    }
}

fn flat_dim(shape: Shape) -> usize {
    match shape {
        Shape::Scalar => 0,
        s => s.len(),
    }
}

/// Structural view used for partitioning: which slots are removed and which
/// edges are present.
struct Moral<'a> {
    model: &'a DagModel,
    removed: Vec<bool>,
    adj: Vec<BTreeSet<usize>>,
}

impl<'a> Moral<'a> {
    /// Moral graph of `model` without `removed` nodes and without cut edges.
    fn new(model: &'a DagModel, removed: Vec<bool>) -> Moral<'a> {
        let n = model.nodes().len();
        let mut adj = vec![BTreeSet::new(); n];
        for c in 0..n {
            let live: Vec<usize> = model
                .parent_indices(c)
                .iter()
                .copied()
                .filter(|&p| !model.is_cut_idx(p, c))
                .collect();
            if !removed[c] {
                for &p in live.iter().filter(|&&p| !removed[p]) {
                    adj[p].insert(c);
                    adj[c].insert(p);
                }
            }
            if model.nodes()[c].is_stochastic() {
                let kept: Vec<usize> = live.into_iter().filter(|&p| !removed[p]).collect();
                for (i, &p) in kept.iter().enumerate() {
                    for &q in &kept[i + 1..] {
                        if p != q {
                            adj[p].insert(q);
                            adj[q].insert(p);
                        }
                    }
                }
            }
        }
        Moral { model, removed, adj }
    }

    /// Connected component id of every live slot.
    fn components(&self) -> Vec<Option<usize>> {
        let n = self.adj.len();
        let mut comp = vec![None; n];
        let mut next = 0;
        for s in 0..n {
            if self.removed[s] || comp[s].is_some() {
                continue;
            }
            comp[s] = Some(next);
            let mut queue = VecDeque::from([s]);
            while let Some(i) = queue.pop_front() {
                for &j in &self.adj[i] {
                    if comp[j].is_none() {
                        comp[j] = Some(next);
                        queue.push_back(j);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    /// Shortest path from `from` to any slot satisfying `target`.
    fn path(&self, from: usize, target: impl Fn(usize) -> bool) -> Option<Vec<String>> {
        let mut prev = vec![usize::MAX; self.adj.len()];
        prev[from] = from;
        let mut queue = VecDeque::from([from]);
        while let Some(i) = queue.pop_front() {
            if i != from && target(i) {
                let mut path = vec![i];
                let mut k = i;
                while k != from {
                    k = prev[k];
                    path.push(k);
                }
                return Some(path.into_iter().rev().map(|k| self.model.nodes()[k].id.to_string()).collect());
            }
            for &j in &self.adj[i] {
                if prev[j] == usize::MAX {
                    prev[j] = i;
                    queue.push_back(j);
                }
            }
        }
        None
    }
}

/// Deterministic nodes computed from excluded nodes alone, at least one of
/// them a separator. Such nodes can be cloned per partition.
fn pure_dets(model: &DagModel, excluded: &[bool], seps: &[usize]) -> Result<Vec<bool>, SplitError> {
    let n = model.nodes().len();
    let mut pure = vec![false; n];
    let mut touches = vec![false; n];
    for &s in seps {
        touches[s] = true;
    }
    for i in model.topo_indices()? {
        if model.nodes()[i].is_stochastic() {
            continue;
        }
        let ps = model.parent_indices(i);
        touches[i] = ps.iter().any(|&p| touches[p]);
        pure[i] = touches[i] && ps.iter().all(|&p| excluded[p] || pure[p]);
    }
    Ok(pure)
}

fn resolve(model: &DagModel, names: &[String]) -> Result<Vec<usize>, SplitError> {
    names
        .iter()
        .map(|s| model.index_of(s).ok_or_else(|| SplitError::UnknownNode(s.clone())))
        .collect()
}

/// Stochastic parents of `v`, looking through deterministic nodes.
fn stochastic_parents(model: &DagModel, v: usize) -> BTreeSet<usize> {
    model.stochastic_reach(v, crate::graph::Direction::Up).0
}

/// Partition labels for every node outside `excluded` and the pure
/// deterministic nodes, given the anchor.
fn partition_by_anchor(
    model: &DagModel,
    excluded: &[usize],
    seps: &[usize],
    anchor: &str,
) -> Result<BTreeMap<usize, Part>, SplitError> {
    let n = model.nodes().len();
    let anchor_idx = model.index_of(anchor).ok_or_else(|| SplitError::UnknownNode(anchor.to_string()))?;
    let mut removed = vec![false; n];
    for &e in excluded {
        removed[e] = true;
    }
    if removed[anchor_idx] {
        return Err(SplitError::AnchorIsSeparator(anchor.to_string()));
    }
    let pure = pure_dets(model, &removed, seps)?;
    for i in 0..n {
        removed[i] |= pure[i];
    }
    if removed[anchor_idx] {
        return Err(SplitError::AnchorIsSeparator(anchor.to_string()));
    }
    let moral = Moral::new(model, removed.clone());
    let comp = moral.components();
    let prior_side: BTreeSet<usize> =
        seps.iter().flat_map(|&s| stochastic_parents(model, s)).filter(|&p| !removed[p]).collect();
    let b = comp[anchor_idx];
    if prior_side.iter().any(|&p| comp[p] == b) {
        let path = moral.path(anchor_idx, |i| prior_side.contains(&i)).unwrap_or_default();
        return Err(SplitError::NotSeparable(path));
    }
    // siblings of the anchor (same removed parents) bring their components along
    let mut b_comps = BTreeSet::from([b]);
    let anchor_parents = removed_parents(model, anchor_idx, &removed);
    if !anchor_parents.is_empty() {
        for i in 0..n {
            if removed[i] || !model.nodes()[i].is_stochastic() || comp[i] == b {
                continue;
            }
            let c = comp[i];
            if removed_parents(model, i, &removed) == anchor_parents && !prior_side.iter().any(|&p| comp[p] == c) {
                b_comps.insert(c);
            }
        }
    }
    Ok((0..n)
        .filter(|&i| !removed[i])
        .map(|i| (i, if b_comps.contains(&comp[i]) { Part::B } else { Part::A }))
        .collect())
}

/// Removed nodes among the parents of `i`, looking through removed
/// deterministic nodes to the separators behind them.
fn removed_parents(model: &DagModel, i: usize, removed: &[bool]) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    let mut stack: Vec<usize> = model.parent_indices(i).to_vec();
    while let Some(p) = stack.pop() {
        if !removed[p] {
            continue;
        }
        if model.nodes()[p].is_stochastic() {
            out.insert(p);
        } else {
            stack.extend(model.parent_indices(p));
        }
    }
    out
}

/// Assigns the connected component containing `anchor` (after removing the
/// separators) to partition b and everything else to a. Stochastic nodes with
/// the same separator parents as the anchor join b with their components.
pub fn auto_partition(
    model: &DagModel,
    separators: &[String],
    anchor: &str,
) -> Result<BTreeMap<String, Part>, SplitError> {
    let seps = resolve(model, separators)?;
    Ok(partition_by_anchor(model, &seps, &seps, anchor)?
        .into_iter()
        .map(|(i, p)| (model.nodes()[i].id.to_string(), p))
        .collect())
}

/// Labels from an explicit neighbour assignment, propagated over components.
fn partition_by_assignment(
    model: &DagModel,
    excluded: &[usize],
    seps: &[usize],
    assignment: &BTreeMap<String, Part>,
) -> Result<BTreeMap<usize, Part>, SplitError> {
    let n = model.nodes().len();
    let mut removed = vec![false; n];
    for &e in excluded {
        removed[e] = true;
    }
    let pure = pure_dets(model, &removed, seps)?;
    for i in 0..n {
        removed[i] |= pure[i];
    }
    let mut assigned = BTreeMap::new();
    for (name, part) in assignment {
        let i = model.index_of(name).ok_or_else(|| SplitError::UnknownNode(name.clone()))?;
        assigned.insert(i, *part);
    }
    for s in seps.iter().copied().chain((0..n).filter(|&i| pure[i])) {
        for &c in model.child_indices(s) {
            if !removed[c] && !assigned.contains_key(&c) {
                return Err(SplitError::Unassigned(model.nodes()[c].id.to_string()));
            }
        }
    }
    let moral = Moral::new(model, removed.clone());
    let comp = moral.components();
    let mut comp_part: BTreeMap<usize, Part> = BTreeMap::new();
    for (&i, &p) in &assigned {
        let Some(c) = comp[i] else { continue };
        if let Some(&q) = comp_part.get(&c) {
            if q != p {
                let other = assigned.iter().find(|(&j, &r)| comp[j] == Some(c) && r != p).map(|(&j, _)| j);
                let path = other.and_then(|o| moral.path(i, |k| k == o)).unwrap_or_default();
                return Err(SplitError::NotSeparable(path));
            }
        }
        comp_part.insert(c, p);
    }
    Ok((0..n)
        .filter(|&i| !removed[i])
        .map(|i| (i, comp[i].and_then(|c| comp_part.get(&c).copied()).unwrap_or(Part::A)))
        .collect())
}

fn reference_family(
    node: &DagNode,
    choice: RefPrior,
) -> Result<Option<(Family, Vec<Expr>)>, SplitError> {
    let name = node.id.to_string();
    let support = support_of(node).ok_or_else(|| SplitError::ReferencePriorSupport {
        node: name.clone(),
        detail: "support must be the real line, the positive half-line or the unit interval".into(),
    })?;
    let dim = flat_dim(node.shape);
    match choice {
        RefPrior::Keep => Ok(None),
        RefPrior::Jeffreys => {
            if support == FlatSupport::Unit && dim > 0 {
                return Err(SplitError::ReferencePriorSupport {
                    node: name,
                    detail: "no Jeffreys prior for vector-valued probabilities".into(),
                });
            }
            let (f, p, _) = jeffreys_reference(support, dim);
            Ok(Some((f, p)))
        }
        RefPrior::Flat(t) => {
            if t.domain() != support {
                return Err(SplitError::ReferencePriorSupport {
                    node: name,
                    detail: format!("flat on the {t} scale needs {} support, node has {support}", t.domain()),
                });
            }
            Ok(Some((Family::ImproperFlat { support, scale: t, dim }, Vec::new())))
        }
    }
}

/// Splits the separators of `model` into `_a` / `_b` copies according to `spec`.
pub fn split_node(model: &DagModel, spec: &SplitSpec) -> Result<SplitModel, SplitError> {
    let report = model.validate();
    if !report.is_ok() {
        return Err(GraphError::Invalid(report).into());
    }
    if spec.separators.is_empty() {
        return Err(SplitError::InvalidSpec("no separators".into()));
    }
    let seps = resolve(model, &spec.separators)?;
    for &s in &seps {
        if model.nodes()[s].is_observed() {
            return Err(SplitError::SeparatorObserved(model.nodes()[s].id.to_string()));
        }
    }
    let nuisance_names: Vec<String> = spec.cuts.iter().map(|(n, _)| n.clone()).collect();
    let nuisance = resolve(model, &nuisance_names)?;
    let excluded: Vec<usize> = seps.iter().chain(&nuisance).copied().collect();
    let n = model.nodes().len();
    let mut is_excluded = vec![false; n];
    for &e in &excluded {
        is_excluded[e] = true;
    }
    let pure = pure_dets(model, &is_excluded, &seps)?;

    let parts = match (&spec.anchor, &spec.assignment) {
        (_, Some(a)) => partition_by_assignment(model, &excluded, &seps, a)?,
        (Some(anchor), None) => partition_by_anchor(model, &excluded, &seps, anchor)?,
        (None, None) => return Err(SplitError::InvalidSpec("need `anchor` or `assignment`".into())),
    };

    // partitions served by each pure deterministic node, from its consumers
    let order = model.topo_indices()?;
    let mut served: Vec<BTreeSet<Part>> = vec![BTreeSet::new(); n];
    for &i in order.iter().rev() {
        if !pure[i] {
            continue;
        }
        let mut s = BTreeSet::new();
        for &c in model.child_indices(i) {
            if pure[c] {
                s.extend(served[c].iter().copied());
            } else if let Some(p) = parts.get(&c) {
                s.insert(*p);
            } else if !is_excluded[c] {
                s.insert(Part::A);
            }
        }
        if s.is_empty() {
            s.insert(Part::A);
        }
        served[i] = s;
    }

    let mut renames: BTreeMap<Part, BTreeMap<String, String>> = BTreeMap::new();
    for part in [Part::A, Part::B] {
        let m = renames.entry(part).or_default();
        for &s in &seps {
            let id = model.nodes()[s].id.as_str();
            m.insert(id.to_string(), copy_name(id, part));
        }
        for i in 0..n {
            if pure[i] && served[i].len() == 2 {
                let id = model.nodes()[i].id.as_str();
                m.insert(id.to_string(), copy_name(id, part));
            }
        }
    }
    let rewire = |node: &DagNode, part: Part| -> DagNode {
        let map = &renames[&part];
        let f = |v: &str| map.get(v).cloned();
        let mut out = node.clone();
        out.kind = match &node.kind {
            NodeKind::Stochastic(d) => NodeKind::Stochastic(Distribution::new(
                d.family,
                d.params.iter().map(|p| p.rename(&f)).collect(),
            )),
            NodeKind::Deterministic { expr, support } => {
                NodeKind::Deterministic { expr: expr.rename(&f), support: *support }
            }
        };
        out
    };

    let mut nodes = Vec::with_capacity(n + seps.len());
    let mut labels = BTreeMap::new();
    // new node name -> (original slot, label)
    let mut origin: Vec<(usize, Label)> = Vec::new();
    let mut transforms = Vec::new();
    for (i, node) in model.nodes().iter().enumerate() {
        let id = node.id.to_string();
        if let Some(k) = seps.iter().position(|&s| s == i) {
            let support = support_of(node);
            let t = match spec.transforms.as_ref().and_then(|ts| ts.get(k)) {
                Some(&t) => {
                    if Some(t.domain()) != support {
                        return Err(SplitError::TransformMismatch { node: id, transform: t });
                    }
                    t
                }
                None => support
                    .map(|s| s.natural_transform())
                    .ok_or_else(|| SplitError::ReferencePriorSupport {
                        node: id.clone(),
                        detail: "no difference transform for this support".into(),
                    })?,
            };
            transforms.push(t);
            for part in [Part::A, Part::B] {
                let name = copy_name(&id, part);
                let choice = spec.reference_prior.get(part);
                let mut copy = rewire(node, part);
                copy.id = NodeId::new(name.clone());
                match (reference_family(node, choice)?, &node.kind) {
                    (Some((family, params)), _) => {
                        let mut fresh = DagNode::stochastic(name.clone(), family, params);
                        fresh.shape = node.shape;
                        fresh.init = if node.is_stochastic() { node.init.clone() } else { None };
                        copy = fresh.allow_improper();
                    }
                    (None, NodeKind::Deterministic { .. }) if part == Part::B => {
                        return Err(SplitError::ReferencePriorSupport {
                            node: id,
                            detail: "the b copy of a deterministic separator needs a reference prior".into(),
                        });
                    }
                    (None, _) => {}
                }
                labels.insert(name, part.into());
                origin.push((i, part.into()));
                nodes.push(copy);
            }
            continue;
        }
        if pure[i] && served[i].len() == 2 {
            for part in [Part::A, Part::B] {
                let mut copy = rewire(node, part);
                copy.id = NodeId::new(copy_name(&id, part));
                labels.insert(copy.id.to_string(), part.into());
                origin.push((i, part.into()));
                nodes.push(copy);
            }
            continue;
        }
        let label: Label = if is_excluded[i] {
            Label::Shared
        } else if pure[i] {
            (*served[i].iter().next().expect("nonempty")).into()
        } else {
            parts.get(&i).copied().unwrap_or(Part::A).into()
        };
        let part = if label == Label::B { Part::B } else { Part::A };
        labels.insert(id, label);
        origin.push((i, label));
        nodes.push(rewire(node, part));
    }

    // carry over existing cuts and install nuisance cuts
    let provisional = DagModel::new(nodes.clone(), model.constants().clone(), Vec::new());
    let mut cuts = BTreeSet::new();
    for (c_new, &(c_old, label)) in origin.iter().enumerate() {
        let part = if label == Label::B { Part::B } else { Part::A };
        for &p_new in provisional.parent_indices(c_new) {
            let p_old = origin[p_new].0;
            let (p_id, c_id) = (&model.nodes()[p_old].id, &model.nodes()[c_old].id);
            let old_cut = model.cuts().contains(&(p_id.clone(), c_id.clone()));
            let nuisance_cut = spec.cuts.iter().any(|(name, q)| name == p_id.as_str() && *q == part && label != Label::Shared);
            if old_cut || nuisance_cut {
                cuts.insert((nodes[p_new].id.clone(), nodes[c_new].id.clone()));
            }
        }
    }
    let split = DagModel::new(nodes, model.constants().clone(), cuts);
    let report = split.validate();
    if !report.is_ok() {
        return Err(GraphError::Invalid(report).into());
    }

    let mut delta_spec = Vec::new();
    for (k, &s) in seps.iter().enumerate() {
        let node = &model.nodes()[s];
        let id = node.id.as_str();
        for suffix in node.shape.component_suffixes() {
            delta_spec.push(DeltaComponent {
                a: format!("{}{suffix}", copy_name(id, Part::A)),
                b: format!("{}{suffix}", copy_name(id, Part::B)),
                transform: transforms[k],
            });
        }
    }
    let out = SplitModel { model: split, labels, delta_spec, spec: spec.clone() };
    check_independence(&out)?;
    Ok(out)
}

/// Checks that no partition-b stochastic node reaches a partition-a one in
/// the moral graph without the separator copies and cut edges.
pub fn check_independence(split: &SplitModel) -> Result<(), SplitError> {
    let model = &split.model;
    let n = model.nodes().len();
    let copies: BTreeSet<String> = split
        .spec
        .separators
        .iter()
        .flat_map(|s| [copy_name(s, Part::A), copy_name(s, Part::B)])
        .collect();
    let removed: Vec<bool> = model.nodes().iter().map(|nd| copies.contains(nd.id.as_str())).collect();
    let moral = Moral::new(model, removed.clone());
    let label = |i: usize| split.labels.get(model.nodes()[i].id.as_str()).copied();
    for s in 0..n {
        if removed[s] || label(s) != Some(Label::B) || !model.nodes()[s].is_stochastic() {
            continue;
        }
        if let Some(path) =
            moral.path(s, |i| label(i) == Some(Label::A) && model.nodes()[i].is_stochastic() && !removed[i])
        {
            return Err(SplitError::NotIndependent(path));
        }
    }
    Ok(())
}

impl SplitModel {
    pub fn nodes_in(&self, label: Label) -> Vec<&str> {
        self.labels.iter().filter(|(_, &l)| l == label).map(|(k, _)| k.as_str()).collect()
    }

    /// Trace columns holding the separator copies.
    pub fn copy_columns(&self) -> Vec<String> {
        self.delta_spec.iter().flat_map(|d| [d.a.clone(), d.b.clone()]).collect()
    }
}

#[cfg(test)]
mod tests;
