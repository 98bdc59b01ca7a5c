//! Recognition of conjugate (prior, likelihood) pairs and their exact draws.
//!
//! | prior                        | children                                   |
//! |------------------------------|--------------------------------------------|
//! | Beta                         | Binomial / Bernoulli with `p` = the node   |
//! | Normal, MVN, flat real       | Normal / MVN, mean affine in the node, precision free of it |
//! | Gamma                        | Normal with precision = the node           |
//! | Wishart                      | MVN with precision = the node              |

use crate::graph::expr::Compiled;
use crate::graph::program::{PKind, Program};
use crate::graph::{Family, FlatSupport, Transform};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, ChiSquared, Distribution, Gamma, StandardNormal};
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum GaussPrior {
    Normal,
    Mvn,
    Flat,
}

/// Affine map `mean = A v + b` of a child's mean in the updated node.
#[derive(Debug, Clone)]
pub(crate) struct Affine {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct GaussChild {
    pub node: usize,
    /// Precomputed when the mean depends on nothing but the updated node.
    pub fixed: Option<Affine>,
}

#[derive(Debug, Clone)]
pub(crate) enum Conjugate {
    BetaBinomial { children: Vec<usize> },
    Gaussian { prior: GaussPrior, children: Vec<GaussChild> },
    GammaNormal { children: Vec<usize> },
    WishartMvn { children: Vec<usize> },
}

impl Conjugate {
    pub fn name(&self) -> &'static str {
        match self {
            Conjugate::BetaBinomial { .. } => "gibbs-beta-binomial",
            Conjugate::Gaussian { .. } => "gibbs-normal",
            Conjugate::GammaNormal { .. } => "gibbs-gamma-normal",
            Conjugate::WishartMvn { .. } => "gibbs-wishart-mvn",
        }
    }
}

/// Non-deterministic slots an expression reaches, inlining deterministic nodes.
pub(crate) fn stochastic_refs(prog: &Program, c: &Compiled) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    let mut stack = Vec::new();
    c.for_each_node(&mut |i| stack.push(i));
    let mut seen = BTreeSet::new();
    while let Some(i) = stack.pop() {
        if !seen.insert(i) {
            continue;
        }
        match &prog.nodes[i].kind {
            PKind::Det(e) => e.for_each_node(&mut |j| stack.push(j)),
            PKind::Stoch { .. } => {
                out.insert(i);
            }
        }
    }
    out
}

fn depends(prog: &Program, c: &Compiled, v: usize) -> bool {
    stochastic_refs(prog, c).contains(&v)
}

/// True if `c` is affine in slot `v` (deterministic nodes inlined).
pub(crate) fn affine_in(prog: &Program, c: &Compiled, v: usize) -> bool {
    let dep = |x: &Compiled| depends(prog, x, v);
    let aff = |x: &Compiled| affine_in(prog, x, v);
    match c {
        Compiled::Const(_) => true,
        Compiled::Node(i) => match &prog.nodes[*i].kind {
            PKind::Det(e) if *i != v => aff(e),
            _ => true,
        },
        Compiled::Add(xs) | Compiled::Sub(xs) | Compiled::Vector(xs) => xs.iter().all(aff),
        Compiled::Mul(xs) => {
            let dependent: Vec<&Compiled> = xs.iter().filter(|x| dep(x)).collect();
            dependent.len() <= 1 && dependent.iter().all(|x| aff(x))
        }
        Compiled::Div(a, b) => aff(a) && !dep(b),
        Compiled::Dot(a, b) => match (dep(a), dep(b)) {
            (true, true) => false,
            (true, false) => aff(a),
            (false, true) => aff(b),
            (false, false) => true,
        },
        Compiled::Neg(a) | Compiled::Index(a, _) => aff(a),
        Compiled::Log(a)
        | Compiled::Exp(a)
        | Compiled::Logit(a)
        | Compiled::InvLogit(a)
        | Compiled::Inverse(a) => !dep(a),
    }
}

fn is_node(c: &Compiled, v: usize) -> bool {
    matches!(c, Compiled::Node(i) if *i == v)
}

/// Looks for a conjugate update of `v` given its likelihood children.
/// `constrained` is true when a deterministic descendant carries a support
/// constraint, which rules exact draws out.
pub(crate) fn detect(prog: &Program, v: usize, children: &[usize], constrained: bool) -> Option<Conjugate> {
    if constrained {
        return None;
    }
    let PKind::Stoch { family, .. } = &prog.nodes[v].kind else {
        return None;
    };
    let child_params = |c: usize| match &prog.nodes[c].kind {
        PKind::Stoch { family, params } => Some((*family, params)),
        PKind::Det(_) => None,
    };
    match family {
        Family::Beta => {
            let ok = children.iter().all(|&c| match child_params(c) {
                Some((Family::Binomial, p)) => is_node(&p[1], v) && !depends(prog, &p[0], v),
                Some((Family::Bernoulli, p)) => is_node(&p[0], v),
                _ => false,
            });
            ok.then(|| Conjugate::BetaBinomial { children: children.to_vec() })
        }
        Family::Normal
        | Family::MultivariateNormal { .. }
        | Family::ImproperFlat { support: FlatSupport::Real, scale: Transform::Identity, .. } => {
            let prior = match family {
                Family::Normal => GaussPrior::Normal,
                Family::MultivariateNormal { .. } => GaussPrior::Mvn,
                _ => GaussPrior::Flat,
            };
            let mut out = Vec::new();
            for &c in children {
                match child_params(c) {
                    Some((Family::Normal | Family::MultivariateNormal { .. }, p))
                        if affine_in(prog, &p[0], v) && !depends(prog, &p[1], v) =>
                    {
                        out.push(GaussChild { node: c, fixed: None });
                    }
                    _ => return None,
                }
            }
            Some(Conjugate::Gaussian { prior, children: out })
        }
        Family::Gamma => {
            let ok = children.iter().all(|&c| match child_params(c) {
                Some((Family::Normal, p)) => is_node(&p[1], v) && !depends(prog, &p[0], v),
                _ => false,
            });
            ok.then(|| Conjugate::GammaNormal { children: children.to_vec() })
        }
        Family::Wishart { .. } => {
            let ok = children.iter().all(|&c| match child_params(c) {
                Some((Family::MultivariateNormal { .. }, p)) => is_node(&p[1], v) && !depends(prog, &p[0], v),
                _ => false,
            });
            ok.then(|| Conjugate::WishartMvn { children: children.to_vec() })
        }
        _ => None,
    }
}

pub(crate) fn draw_beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> Option<f64> {
    Beta::new(a, b).ok().map(|d| d.sample(rng))
}

pub(crate) fn draw_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> Option<f64> {
    Gamma::new(shape, 1.0 / rate).ok().map(|d| d.sample(rng))
}

/// Draw from the Gaussian with precision `p` and linear term `h`
/// (mean `p⁻¹ h`).
pub(crate) fn draw_gaussian<R: Rng + ?Sized>(rng: &mut R, p: &DMatrix<f64>, h: &DVector<f64>) -> Option<Vec<f64>> {
    let chol = crate::linalg::cholesky(p)?;
    let mean = chol.solve(h);
    let z = DVector::from_fn(h.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    // x = mean + L⁻ᵀ z has covariance (L Lᵀ)⁻¹
    let lt = chol.l().transpose();
    let offset = lt.solve_upper_triangular(&z)?;
    Some((mean + offset).iter().copied().collect())
}

/// Bartlett draw of `W ~ Wishart(R, k)` with inverse scale `R` (`E[W] = k R⁻¹`).
pub(crate) fn draw_wishart<R: Rng + ?Sized>(rng: &mut R, r: &DMatrix<f64>, k: f64) -> Option<DMatrix<f64>> {
    let d = r.nrows();
    let scale = crate::linalg::spd_inverse(r)?;
    let l = crate::linalg::cholesky(&scale)?.l();
    let mut a = DMatrix::zeros(d, d);
    for i in 0..d {
        let chi = ChiSquared::new(k - i as f64).ok()?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let la = &l * a;
    Some(crate::linalg::symmetrize(&(&la * la.transpose())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn wishart_draws_have_expected_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let k = 5.0;
        let n = 20_000;
        let mut sum = DMatrix::zeros(2, 2);
        for _ in 0..n {
            sum += draw_wishart(&mut rng, &r, k).unwrap();
        }
        let mean = sum / n as f64;
        let expected = crate::linalg::spd_inverse(&r).unwrap() * k;
        for (m, e) in mean.iter().zip(expected.iter()) {
            assert!((m - e).abs() < 0.05 * e.abs().max(0.5), "{mean} vs {expected}");
        }
    }

    #[test]
    fn gaussian_draws_have_requested_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]);
        let h = DVector::from_vec(vec![1.0, -1.0]);
        let cov = crate::linalg::spd_inverse(&p).unwrap();
        let mean = &cov * &h;
        let n = 40_000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| draw_gaussian(&mut rng, &p, &h).unwrap()).collect();
        for k in 0..2 {
            let m = draws.iter().map(|d| d[k]).sum::<f64>() / n as f64;
            let v = draws.iter().map(|d| (d[k] - m).powi(2)).sum::<f64>() / n as f64;
            assert!((m - mean[k]).abs() < 4.0 * (cov[(k, k)] / n as f64).sqrt());
            assert!((v / cov[(k, k)] - 1.0).abs() < 0.03);
        }
    }
}
