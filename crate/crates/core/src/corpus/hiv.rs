//! HIV prevalence among pregnant women: nine basic parameters informed
//! directly or through functions by twelve binomial studies.
//!
//! | param | meaning                                             |
//! |-------|-----------------------------------------------------|
//! | a     | proportion born in sub-Saharan Africa               |
//! | b     | proportion who are injecting drug users             |
//! | c, d, e | HIV prevalence in the a, b and remaining groups   |
//! | f, g, h | proportion of infections diagnosed, per group     |
//! | w     | proportion of the remaining group at raised risk    |

use super::CorpusError;
use crate::graph::{DagModel, DagNode, Expr, Family, FlatSupport, Shape, Value};
use crate::split::SplitSpec;
use std::collections::BTreeMap;

/// `(study, y, n)` for the twelve studies.
pub const HIV_DATA: [(usize, u64, u64); 12] = [
    (1, 11044, 104577),
    (2, 12, 882),
    (3, 252, 15428),
    (4, 10, 473),
    (5, 74, 136139),
    (6, 254, 102287),
    (7, 43, 60),
    (8, 4, 17),
    (9, 87, 254),
    (10, 12, 15),
    (11, 14, 118),
    (12, 5, 31),
];

/// Probability informed by each study, in terms of the basic parameters.
/// `rest` is `1 − a − b`.
const STUDY_EXPR: [&str; 12] = [
    "a",
    "b",
    "c",
    "d",
    "(/ (+ (* d b) (* e rest)) (- 1 a))",
    "(+ (* c a) (* d b) (* e rest))",
    "(/ (* f c a) (+ (* f c a) (* g d b) (* h e rest)))",
    "(/ (* g d b) (+ (* g d b) (* h e rest)))",
    "(/ (+ (* f c a) (* g d b) (* h e rest)) (+ (* c a) (* d b) (* e rest)))",
    "g",
    "w",
    "(/ (+ (* d b) (* w e rest)) (+ (* d b) (* e rest)))",
];

/// Basic parameters with their starting values.
const BASIC: [(&str, f64); 9] = [
    ("a", 0.1),
    ("b", 0.015),
    ("c", 0.015),
    ("d", 0.02),
    ("e", 0.001),
    ("f", 0.4),
    ("g", 0.8),
    ("h", 0.3),
    ("w", 0.12),
];

/// Basic parameters with a directly informative study.
pub const TYPE_A: [(&str, usize); 6] = [("a", 1), ("b", 2), ("c", 3), ("d", 4), ("g", 10), ("w", 11)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HivPrior {
    /// Beta(1, 1) on every basic parameter.
    Uniform,
    /// Beta(1/2, 1/2), for prior sensitivity.
    Jeffreys,
}

pub fn p_node(i: usize) -> String {
    format!("p[{i}]")
}

pub fn y_node(i: usize) -> String {
    format!("y[{i}]")
}

pub fn build_hiv_model(prior: HivPrior) -> DagModel {
    let ab = match prior {
        HivPrior::Uniform => 1.0,
        HivPrior::Jeffreys => 0.5,
    };
    let mut nodes: Vec<DagNode> = BASIC
        .iter()
        .map(|&(name, init)| {
            DagNode::stochastic(name, Family::Beta, vec![Expr::Const(ab), Expr::Const(ab)])
                .with_init(Value::Scalar(init))
        })
        .collect();
    nodes.push(
        DagNode::deterministic("rest", Expr::parse("(- 1 a b)").expect("valid"), Shape::Scalar)
            .with_support(FlatSupport::Positive),
    );
    for (i, src) in STUDY_EXPR.iter().enumerate() {
        let expr = Expr::parse(src).expect("valid study expression");
        nodes.push(DagNode::deterministic(p_node(i + 1), expr, Shape::Scalar).with_support(FlatSupport::Unit));
    }
    for &(i, y, n) in &HIV_DATA {
        nodes.push(
            DagNode::stochastic(y_node(i), Family::Binomial, vec![Expr::Const(n as f64), Expr::Var(p_node(i))])
                .observe(Value::Scalar(y as f64)),
        );
    }
    DagModel::new(nodes, BTreeMap::new(), [])
}

/// Direct versus indirect evidence on basic parameter `theta`: the study
/// informing `theta` alone forms partition b.
pub fn hiv_split_type_a(theta: &str) -> Result<SplitSpec, CorpusError> {
    let &(_, study) =
        TYPE_A.iter().find(|(p, _)| *p == theta).ok_or_else(|| CorpusError::NoDirectEvidence(theta.to_string()))?;
    Ok(SplitSpec::anchored(&[theta], &y_node(study)))
}

/// Cross-validation of study `i`: `p_i` from the rest of the model against
/// `p_i` from study `i` alone.
pub fn hiv_split_type_b(i: usize) -> Result<SplitSpec, CorpusError> {
    if !(1..=12).contains(&i) {
        return Err(CorpusError::StudyOutOfRange(i));
    }
    Ok(SplitSpec::anchored(&[&p_node(i)], &y_node(i)))
}
