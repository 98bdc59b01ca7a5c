//! Metropolis-within-Gibbs sweeps over a compiled model.

use super::conjugate::{self, Affine, Conjugate, GaussPrior};
use super::transform::Link;
use super::{InferenceError, SamplerConfig};
use crate::graph::program::{PKind, Program};
use crate::graph::{DagModel, Family, Shape, Support, Value};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeSet;

const INIT_JITTER_SD: f64 = 0.25;
const INIT_ATTEMPTS: u32 = 8;
const INITIAL_LOG_SCALE: f64 = -2.3;
const MAX_ENUMERATION: f64 = 100_000.0;

#[derive(Debug, Clone)]
pub(crate) enum Method {
    Rwm { block: bool },
    Enumerate,
    Conjugate(Conjugate),
}

#[derive(Debug, Clone)]
pub(crate) struct Update {
    pub node: usize,
    pub name: String,
    pub shape: Shape,
    /// Deterministic descendants, topologically ordered.
    pub det_chain: Vec<usize>,
    /// Stochastic children reached without crossing a cut edge.
    pub lik_children: Vec<usize>,
    pub method: Method,
}

impl Update {
    pub fn kind_name(&self) -> &'static str {
        match &self.method {
            Method::Rwm { block: false } => "rwm",
            Method::Rwm { block: true } => "rwm-block",
            Method::Enumerate => "enumerate",
            Method::Conjugate(c) => c.name(),
        }
    }
}

pub(crate) struct Engine {
    pub prog: Program,
    pub updates: Vec<Update>,
    /// Slots recorded in the trace.
    pub monitor: Vec<usize>,
    pub columns: Vec<String>,
    init: Vec<Option<Value>>,
}

pub(crate) struct ChainOutput {
    /// `[column][draw]`.
    pub columns: Vec<Vec<f64>>,
    pub iterations: Vec<u64>,
    /// Post-burn-in acceptance rate per update.
    pub acceptance: Vec<f64>,
}

fn link_for(prog: &Program, v: usize, values: &[Value]) -> Option<Link> {
    let PKind::Stoch { family, .. } = &prog.nodes[v].kind else {
        return None;
    };
    match family.support() {
        Support::Real => Some(Link::Identity),
        Support::Positive => Some(Link::Log),
        Support::Unit => Some(Link::Logit),
        Support::PositiveDefinite => Some(Link::LogCholesky(prog.nodes[v].shape.dims()[0])),
        Support::Bounded => {
            let p = prog.params(v, values).ok()?;
            Some(Link::Interval(p[0].as_scalar()?, p[1].as_scalar()?))
        }
        Support::Binary | Support::Count => None,
    }
}

/// Deterministic descendants of `v` and the stochastic children whose
/// likelihood enters `v`'s full conditional.
fn reach(model: &DagModel, prog: &Program, v: usize) -> (Vec<usize>, Vec<usize>) {
    let mut dets = BTreeSet::new();
    let mut stack = vec![v];
    while let Some(i) = stack.pop() {
        for &c in model.child_indices(i) {
            if matches!(prog.nodes[c].kind, PKind::Det(_)) && dets.insert(c) {
                stack.push(c);
            }
        }
    }
    let mut lik = BTreeSet::new();
    let mut seen = BTreeSet::new();
    let mut stack = vec![v];
    while let Some(i) = stack.pop() {
        for &c in model.child_indices(i) {
            if model.is_cut_idx(i, c) {
                continue;
            }
            match prog.nodes[c].kind {
                PKind::Det(_) => {
                    if seen.insert(c) {
                        stack.push(c);
                    }
                }
                PKind::Stoch { .. } => {
                    lik.insert(c);
                }
            }
        }
    }
    let det_chain = prog.order.iter().copied().filter(|i| dets.contains(i)).collect();
    (det_chain, lik.into_iter().collect())
}

impl Engine {
    pub fn build(model: &DagModel, config: &SamplerConfig) -> Result<Engine, InferenceError> {
        let prog = model.compile()?;
        let mut updates = Vec::new();
        for &v in &prog.order {
            let node = &prog.nodes[v];
            let PKind::Stoch { family, .. } = &node.kind else { continue };
            if node.observed.is_some() {
                continue;
            }
            let (det_chain, lik_children) = reach(model, &prog, v);
            let constrained = det_chain.iter().any(|&d| prog.nodes[d].det_support.is_some());
            let method = if family.is_discrete() {
                Method::Enumerate
            } else {
                match config
                    .use_conjugate
                    .then(|| conjugate::detect(&prog, v, &lik_children, constrained))
                    .flatten()
                {
                    Some(c) => Method::Conjugate(c),
                    None => Method::Rwm { block: node.shape.len() > 1 },
                }
            };
            updates.push(Update {
                node: v,
                name: model.nodes()[v].id.to_string(),
                shape: node.shape,
                det_chain,
                lik_children,
                method,
            });
        }
        let monitor: Vec<usize> = match &config.monitor {
            Some(names) => names
                .iter()
                .map(|n| model.index_of(n).ok_or_else(|| InferenceError::UnknownMonitor(n.clone())))
                .collect::<Result<_, _>>()?,
            None => (0..prog.nodes.len()).filter(|&i| prog.nodes[i].observed.is_none()).collect(),
        };
        let columns = monitor
            .iter()
            .flat_map(|&i| {
                let name = model.nodes()[i].id.to_string();
                prog.nodes[i].shape.component_suffixes().into_iter().map(move |s| format!("{name}{s}"))
            })
            .collect();
        let init = model.nodes().iter().map(|n| n.init.clone()).collect();
        let mut engine = Engine { prog, updates, monitor, columns, init };
        engine.precompute_affine();
        Ok(engine)
    }

    /// Fixes the affine coefficients of Gaussian children whose mean depends
    /// on nothing but the updated node.
    fn precompute_affine(&mut self) {
        let mut scratch: Vec<Value> = self.prog.nodes.iter().map(|n| Value::zeros(n.shape)).collect();
        for u in 0..self.updates.len() {
            let Method::Conjugate(Conjugate::Gaussian { children, .. }) = &self.updates[u].method else {
                continue;
            };
            let v = self.updates[u].node;
            let mut fixed = Vec::new();
            for ch in children {
                let PKind::Stoch { params, .. } = &self.prog.nodes[ch.node].kind else { unreachable!() };
                let refs = conjugate::stochastic_refs(&self.prog, &params[0]);
                fixed.push(if refs.iter().all(|&r| r == v) {
                    self.affine_at(u, ch.node, &mut scratch).ok()
                } else {
                    None
                });
            }
            if let Method::Conjugate(Conjugate::Gaussian { children, .. }) = &mut self.updates[u].method {
                for (ch, f) in children.iter_mut().zip(fixed) {
                    ch.fixed = f;
                }
            }
        }
    }

    fn refresh(&self, u: &Update, values: &mut [Value]) -> bool {
        for &d in &u.det_chain {
            match self.prog.det_value(d, values) {
                Ok(x) => values[d] = x,
                Err(_) => return false,
            }
        }
        true
    }

    /// Log full conditional of the updated node, up to a constant, at the
    /// current (refreshed) state.
    fn target(&self, u: &Update, values: &[Value]) -> f64 {
        let mut lp = self.prog.node_logp(u.node, values);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        for &d in &u.det_chain {
            if !self.prog.det_ok(d, &values[d]) {
                return f64::NEG_INFINITY;
            }
        }
        for &c in &u.lik_children {
            lp += self.prog.node_logp(c, values);
            if lp == f64::NEG_INFINITY {
                return lp;
            }
        }
        lp
    }

    fn set(&self, u: &Update, values: &mut [Value], x: Value) -> bool {
        values[u.node] = x;
        self.refresh(u, values)
    }

    /// Coefficients of child `c`'s mean as an affine function of `u`'s node,
    /// by evaluation at zero and the unit vectors. Leaves the node perturbed.
    fn affine_at(&self, u: usize, c: usize, values: &mut [Value]) -> Result<Affine, InferenceError> {
        let up = &self.updates[u];
        let d = up.shape.len();
        let PKind::Stoch { params, .. } = &self.prog.nodes[c].kind else { unreachable!() };
        let eval_err = |source| InferenceError::Eval { node: up.name.clone(), source };
        let mut basis = vec![0.0; d];
        self.set(up, values, Value::from_components(up.shape, &basis));
        let b = DVector::from_vec(params[0].eval(values).map_err(eval_err)?.components());
        let mut a = DMatrix::zeros(b.len(), d);
        for k in 0..d {
            basis[k] = 1.0;
            self.set(up, values, Value::from_components(up.shape, &basis));
            basis[k] = 0.0;
            let col = params[0].eval(values).map_err(eval_err)?.components();
            for r in 0..b.len() {
                a[(r, k)] = col[r] - b[r];
            }
        }
        Ok(Affine { a, b })
    }

    /// Central value of a node's prior given its parents' current values.
    fn central(&self, v: usize, values: &[Value]) -> Result<Value, InferenceError> {
        let PKind::Stoch { family, .. } = &self.prog.nodes[v].kind else { unreachable!() };
        let shape = self.prog.nodes[v].shape;
        let p = self
            .prog
            .params(v, values)
            .map_err(|source| InferenceError::Eval { node: self.node_name(v), source })?;
        let s = |i: usize| p[i].as_scalar().unwrap_or(f64::NAN);
        Ok(match family {
            Family::Bernoulli => Value::Scalar(if s(0) >= 0.5 { 1.0 } else { 0.0 }),
            Family::Binomial => Value::Scalar((s(0) * s(1)).round()),
            Family::Beta => Value::Scalar(s(0) / (s(0) + s(1))),
            Family::Normal => Value::Scalar(s(0)),
            Family::MultivariateNormal { .. } => p[0].clone(),
            Family::Gamma => Value::Scalar(s(0) / s(1)),
            Family::Wishart { .. } => match p[0].as_matrix().and_then(crate::linalg::spd_inverse) {
                Some(inv) => Value::Matrix(inv * s(1)),
                None => Value::Matrix(DMatrix::identity(shape.len(), 1)),
            },
            Family::Uniform => Value::Scalar(0.5 * (s(0) + s(1))),
            Family::ImproperFlat { support, .. } => {
                let c = match support {
                    crate::graph::FlatSupport::Real => 0.0,
                    crate::graph::FlatSupport::Positive => 1.0,
                    crate::graph::FlatSupport::Unit => 0.5,
                };
                Value::from_components(shape, &vec![c; shape.len()])
            }
        })
    }

    fn node_name(&self, v: usize) -> String {
        self.updates
            .iter()
            .find(|u| u.node == v)
            .map(|u| u.name.clone())
            .unwrap_or_else(|| format!("#{v}"))
    }

    fn initial_state(&self, rng: &mut ChaCha8Rng) -> Result<Vec<Value>, InferenceError> {
        let mut base: Vec<Value> = self
            .prog
            .nodes
            .iter()
            .map(|n| n.observed.clone().unwrap_or_else(|| Value::zeros(n.shape)))
            .collect();
        for &i in &self.prog.order {
            let n = &self.prog.nodes[i];
            match &n.kind {
                PKind::Det(_) => {
                    base[i] = self
                        .prog
                        .det_value(i, &base)
                        .map_err(|source| InferenceError::Eval { node: format!("#{i}"), source })?;
                }
                PKind::Stoch { .. } if n.observed.is_none() => {
                    base[i] = match &self.init[i] {
                        Some(v) => v.clone(),
                        None => self.central(i, &base)?,
                    };
                }
                PKind::Stoch { .. } => {}
            }
        }
        let mut sd = INIT_JITTER_SD;
        for _ in 0..INIT_ATTEMPTS {
            let mut cand = base.clone();
            for u in &self.updates {
                let Some(link) = link_for(&self.prog, u.node, &cand) else { continue };
                let mut y = link.forward(&cand[u.node]);
                for yi in &mut y {
                    *yi += sd * rng.sample::<f64, _>(StandardNormal);
                }
                cand[u.node] = link.inverse(&y, u.shape).0;
            }
            if self.prog.refresh_deterministic(&mut cand).is_ok() && self.prog.log_joint(&cand).is_finite() {
                return Ok(cand);
            }
            sd *= 0.5;
        }
        let lj = self.prog.log_joint(&base);
        if lj.is_finite() {
            return Ok(base);
        }
        let bad: Vec<String> = self
            .updates
            .iter()
            .filter(|u| !self.target(u, &base).is_finite())
            .map(|u| u.name.clone())
            .collect();
        Err(InferenceError::InitialDensity {
            detail: if bad.is_empty() {
                "log joint density is not finite".into()
            } else {
                format!("zero density around {}; supply `init` values", bad.join(", "))
            },
        })
    }

    pub fn run_chain(&self, config: &SamplerConfig, chain: usize) -> Result<ChainOutput, InferenceError> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(chain as u64);
        let mut values = self.initial_state(&mut rng)?;
        let n_up = self.updates.len();
        let mut log_scale = vec![INITIAL_LOG_SCALE; n_up];
        let mut batch_acc = vec![0u32; n_up];
        let mut batch_tries = vec![0u32; n_up];
        let mut post_acc = vec![0u64; n_up];
        let mut post_tries = vec![0u64; n_up];
        let mut batch_index = 0u32;

        let retained = (config.n_iterations - config.burn_in) / config.thin;
        let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(retained); self.columns.len()];
        let mut iterations = Vec::with_capacity(retained);

        for iter in 1..=config.n_iterations {
            let burning = iter <= config.burn_in;
            for (k, u) in self.updates.iter().enumerate() {
                let accepted = match &u.method {
                    Method::Rwm { .. } => self.rwm_step(u, &mut values, log_scale[k].exp(), &mut rng),
                    Method::Enumerate => {
                        self.enumerate_step(u, &mut values, &mut rng)?;
                        true
                    }
                    Method::Conjugate(c) => {
                        self.conjugate_step(k, c, &mut values, &mut rng)?;
                        true
                    }
                };
                if burning {
                    batch_tries[k] += 1;
                    batch_acc[k] += accepted as u32;
                } else {
                    post_tries[k] += 1;
                    post_acc[k] += accepted as u64;
                }
            }
            if burning && iter % config.adapt_window == 0 {
                batch_index += 1;
                let step = 1.0 / (batch_index as f64).sqrt();
                for (k, u) in self.updates.iter().enumerate() {
                    if let Method::Rwm { block } = u.method {
                        let target = if block { config.target_accept_block } else { config.target_accept_scalar };
                        let rate = batch_acc[k] as f64 / batch_tries[k].max(1) as f64;
                        log_scale[k] += step * (rate - target);
                    }
                    batch_acc[k] = 0;
                    batch_tries[k] = 0;
                }
            }
            if !burning && (iter - config.burn_in).is_multiple_of(config.thin) {
                iterations.push(iter as u64);
                let mut col = 0;
                for &m in &self.monitor {
                    match &values[m] {
                        Value::Scalar(x) => {
                            columns[col].push(*x);
                            col += 1;
                        }
                        v => {
                            for x in v.components() {
                                columns[col].push(x);
                                col += 1;
                            }
                        }
                    }
                }
            }
        }
        let acceptance: Vec<f64> =
            (0..n_up).map(|k| post_acc[k] as f64 / post_tries[k].max(1) as f64).collect();
        for (k, u) in self.updates.iter().enumerate() {
            if matches!(u.method, Method::Rwm { .. }) && post_tries[k] > 0 && acceptance[k] < 0.001 {
                return Err(InferenceError::Stuck { node: u.name.clone(), chain, rate: acceptance[k] });
            }
        }
        Ok(ChainOutput { columns, iterations, acceptance })
    }

    fn rwm_step(&self, u: &Update, values: &mut [Value], scale: f64, rng: &mut ChaCha8Rng) -> bool {
        let Some(link) = link_for(&self.prog, u.node, values) else { return false };
        let old = values[u.node].clone();
        let y = link.forward(&old);
        if y.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let (_, jac_old) = link.inverse(&y, u.shape);
        let lp_old = self.target(u, values) + jac_old;
        let proposal: Vec<f64> = y.iter().map(|&v| v + scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let (x_new, jac_new) = link.inverse(&proposal, u.shape);
        let saved: Vec<Value> = u.det_chain.iter().map(|&d| values[d].clone()).collect();
        let lp_new = if self.set(u, values, x_new) { self.target(u, values) + jac_new } else { f64::NEG_INFINITY };
        let log_u: f64 = rng.random::<f64>().ln();
        let accept = lp_new.is_finite() && (lp_old == f64::NEG_INFINITY || log_u < lp_new - lp_old);
        if !accept {
            values[u.node] = old;
            for (&d, v) in u.det_chain.iter().zip(saved) {
                values[d] = v;
            }
        }
        accept
    }

    fn enumerate_step(&self, u: &Update, values: &mut [Value], rng: &mut ChaCha8Rng) -> Result<(), InferenceError> {
        let PKind::Stoch { family, .. } = &self.prog.nodes[u.node].kind else { unreachable!() };
        let upper = match family {
            Family::Bernoulli => 1.0,
            _ => {
                let p = self
                    .prog
                    .params(u.node, values)
                    .map_err(|source| InferenceError::Eval { node: u.name.clone(), source })?;
                p[0].as_scalar().unwrap_or(0.0).clamp(0.0, MAX_ENUMERATION)
            }
        };
        let n = upper as usize + 1;
        let mut lps = Vec::with_capacity(n);
        for k in 0..n {
            lps.push(if self.set(u, values, Value::Scalar(k as f64)) { self.target(u, values) } else { f64::NEG_INFINITY });
        }
        let max = lps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(InferenceError::ImproperConditional { node: u.name.clone() });
        }
        let weights: Vec<f64> = lps.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut r = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (k, w) in weights.iter().enumerate() {
            if r < *w {
                pick = k;
                break;
            }
            r -= w;
        }
        self.set(u, values, Value::Scalar(pick as f64));
        Ok(())
    }

    fn conjugate_step(
        &self,
        k: usize,
        c: &Conjugate,
        values: &mut [Value],
        rng: &mut ChaCha8Rng,
    ) -> Result<(), InferenceError> {
        let u = &self.updates[k];
        let eval_err = |source| InferenceError::Eval { node: u.name.clone(), source };
        let improper = || InferenceError::ImproperConditional { node: u.name.clone() };
        let params = |i: usize, values: &[Value]| self.prog.params(i, values).map_err(eval_err);
        let scalar = |v: &Value| v.as_scalar().unwrap_or(f64::NAN);
        let x = match c {
            Conjugate::BetaBinomial { children } => {
                let p = params(u.node, values)?;
                let (mut a, mut b) = (scalar(&p[0]), scalar(&p[1]));
                for &ch in children {
                    let kx = scalar(&values[ch]);
                    let n = match &self.prog.nodes[ch].kind {
                        PKind::Stoch { family: Family::Binomial, .. } => scalar(&params(ch, values)?[0]),
                        _ => 1.0,
                    };
                    a += kx;
                    b += n - kx;
                }
                let mut draw = conjugate::draw_beta(rng, a, b).ok_or_else(improper)?;
                // keep the draw strictly inside (0, 1)
                draw = draw.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
                Value::Scalar(draw)
            }
            Conjugate::GammaNormal { children } => {
                let p = params(u.node, values)?;
                let (mut shape, mut rate) = (scalar(&p[0]), scalar(&p[1]));
                for &ch in children {
                    let mean = scalar(&params(ch, values)?[0]);
                    let d = scalar(&values[ch]) - mean;
                    shape += 0.5;
                    rate += 0.5 * d * d;
                }
                Value::Scalar(conjugate::draw_gamma(rng, shape, rate).ok_or_else(improper)?.max(f64::MIN_POSITIVE))
            }
            Conjugate::WishartMvn { children } => {
                let p = params(u.node, values)?;
                let mut r = p[0].as_matrix().cloned().ok_or_else(improper)?;
                let mut df = scalar(&p[1]);
                for &ch in children {
                    let mean = params(ch, values)?[0].components();
                    let x = values[ch].components();
                    let d = DVector::from_iterator(x.len(), x.iter().zip(&mean).map(|(a, b)| a - b));
                    r += &d * d.transpose();
                    df += 1.0;
                }
                Value::Matrix(conjugate::draw_wishart(rng, &r, df).ok_or_else(improper)?)
            }
            Conjugate::Gaussian { prior, children } => {
                let d = u.shape.len();
                let p = params(u.node, values)?;
                let (mut prec, mut h) = match prior {
                    GaussPrior::Normal => {
                        let (m0, t0) = (scalar(&p[0]), scalar(&p[1]));
                        (DMatrix::from_element(1, 1, t0), DVector::from_element(1, t0 * m0))
                    }
                    GaussPrior::Mvn => {
                        let m0 = DVector::from_vec(p[0].components());
                        let p0 = p[1].as_matrix().cloned().ok_or_else(improper)?;
                        let h0 = &p0 * m0;
                        (p0, h0)
                    }
                    GaussPrior::Flat => (DMatrix::zeros(d, d), DVector::zeros(d)),
                };
                for ch in children {
                    let aff = match &ch.fixed {
                        Some(a) => a.clone(),
                        None => self.affine_at(k, ch.node, values)?,
                    };
                    let cp = params(ch.node, values)?;
                    let q = match &cp[1] {
                        Value::Scalar(t) => DMatrix::from_element(1, 1, *t),
                        Value::Matrix(m) => m.clone(),
                        Value::Vector(_) => return Err(improper()),
                    };
                    let y = DVector::from_vec(values[ch.node].components());
                    let atq = aff.a.transpose() * &q;
                    prec += &atq * &aff.a;
                    h += atq * (y - &aff.b);
                }
                let draw = conjugate::draw_gaussian(rng, &prec, &h).ok_or_else(improper)?;
                Value::from_components(u.shape, &draw)
            }
        };
        if !self.set(u, values, x) {
            return Err(improper());
        }
        Ok(())
    }
}
