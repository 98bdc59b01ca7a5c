//! Ancestral sampling from a model's priors.

use crate::graph::program::{PKind, Program};
use crate::graph::{DagModel, Family, GraphError, Value};
use crate::inference::conjugate::{draw_beta, draw_gamma, draw_gaussian, draw_wishart};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};
use std::collections::BTreeMap;

/// Attempts before giving up on drawing inside the deterministic supports.
const MAX_ATTEMPTS: usize = 10_000;

/// Draws every node in topological order. Stochastic nodes named in `fixed`
/// keep the given value; observed nodes are redrawn like any other. Draws
/// that leave a deterministic node's declared support are rejected and
/// restarted, which samples the prior truncated to the constraints.
pub fn forward_sample<R: Rng + ?Sized>(
    model: &DagModel,
    fixed: &BTreeMap<String, Value>,
    rng: &mut R,
) -> Result<BTreeMap<String, Value>, GraphError> {
    let prog = Program::compile(model)?;
    for _ in 0..MAX_ATTEMPTS {
        if let Some(values) = attempt(model, &prog, fixed, rng)? {
            return Ok(model.nodes().iter().zip(values).map(|(n, v)| (n.id.as_str().to_string(), v)).collect());
        }
    }
    Err(GraphError::Contract {
        node: String::new(),
        message: format!("no draw satisfied the deterministic constraints in {MAX_ATTEMPTS} attempts"),
    })
}

fn attempt<R: Rng + ?Sized>(
    model: &DagModel,
    prog: &Program,
    fixed: &BTreeMap<String, Value>,
    rng: &mut R,
) -> Result<Option<Vec<Value>>, GraphError> {
    let mut values: Vec<Value> = prog.nodes.iter().map(|n| Value::zeros(n.shape)).collect();
    for &i in &prog.order {
        let name = model.nodes()[i].id.as_str();
        let eval_err = |source| GraphError::Eval { node: name.to_string(), source };
        values[i] = match &prog.nodes[i].kind {
            PKind::Det(_) => {
                let v = prog.det_value(i, &values).map_err(eval_err)?;
                if !prog.det_ok(i, &v) {
                    return Ok(None);
                }
                v
            }
            PKind::Stoch { .. } if fixed.contains_key(name) => fixed[name].clone(),
            PKind::Stoch { family, .. } => {
                let params = prog.params(i, &values).map_err(eval_err)?;
                draw(*family, &params, rng)
                    .map_err(|message| GraphError::Contract { node: name.to_string(), message })?
            }
        };
    }
    Ok(Some(values))
}

fn draw<R: Rng + ?Sized>(family: Family, p: &[Value], rng: &mut R) -> Result<Value, String> {
    let s = |k: usize| p[k].as_scalar().ok_or_else(|| format!("parameter {} must be scalar", k + 1));
    let invalid = || format!("invalid parameters for {}", family.name());
    let x = match family {
        Family::Bernoulli => Value::Scalar(if rng.random::<f64>() < s(0)? { 1.0 } else { 0.0 }),
        Family::Binomial => {
            let n = s(0)?;
            let b = Binomial::new(n.round() as u64, s(1)?).map_err(|_| invalid())?;
            Value::Scalar(b.sample(rng) as f64)
        }
        Family::Beta => Value::Scalar(draw_beta(rng, s(0)?, s(1)?).ok_or_else(invalid)?),
        Family::Normal => {
            let prec = s(1)?;
            let d = Normal::new(s(0)?, 1.0 / prec.sqrt()).map_err(|_| invalid())?;
            Value::Scalar(d.sample(rng))
        }
        Family::MultivariateNormal { dim } => {
            let mean = p[0].as_vector().ok_or_else(invalid)?;
            let prec = p[1].as_matrix().ok_or_else(invalid)?;
            let h: DVector<f64> = prec * DVector::from_column_slice(mean);
            let x = draw_gaussian(rng, prec, &h).ok_or_else(invalid)?;
            debug_assert_eq!(x.len(), dim);
            Value::Vector(x)
        }
        Family::Gamma => Value::Scalar(draw_gamma(rng, s(0)?, s(1)?).ok_or_else(invalid)?),
        Family::Wishart { .. } => {
            let r: &DMatrix<f64> = p[0].as_matrix().ok_or_else(invalid)?;
            Value::Matrix(draw_wishart(rng, r, s(1)?).ok_or_else(invalid)?)
        }
        Family::Uniform => {
            let (lo, hi) = (s(0)?, s(1)?);
            if !(lo < hi) {
                return Err(invalid());
            }
            Value::Scalar(rng.random_range(lo..hi))
        }
        Family::ImproperFlat { .. } => return Err("cannot simulate from an improper prior".into()),
    };
    Ok(x)
}
