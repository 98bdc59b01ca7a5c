//! Maps between a node's support and unconstrained coordinates.

use crate::graph::{Shape, Value};
use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Link {
    Identity,
    Log,
    Logit,
    /// Scaled logit onto `(lo, hi)`.
    Interval(f64, f64),
    /// Positive-definite matrix through its Cholesky factor with log diagonal.
    LogCholesky(usize),
}

fn softplus(y: f64) -> f64 {
    y.max(0.0) + (-y.abs()).exp().ln_1p()
}

/// `ln σ(y) + ln(1 - σ(y))`, stable for large `|y|`.
fn ln_logistic_jacobian(y: f64) -> f64 {
    -softplus(-y) - softplus(y)
}

impl Link {
    /// Unconstrained coordinates of `x`; non-finite if `x` is off the support.
    pub fn forward(&self, x: &Value) -> Vec<f64> {
        match *self {
            Link::LogCholesky(d) => {
                let m = x.as_matrix().expect("matrix value");
                let mut out = Vec::with_capacity(d * (d + 1) / 2);
                match crate::linalg::cholesky(m) {
                    Some(c) => {
                        let l = c.l();
                        for i in 0..d {
                            for j in 0..=i {
                                out.push(if i == j { l[(i, i)].ln() } else { l[(i, j)] });
                            }
                        }
                    }
                    None => out.resize(d * (d + 1) / 2, f64::NAN),
                }
                out
            }
            link => x.components().into_iter().map(|v| link.forward_scalar(v)).collect(),
        }
    }

    fn forward_scalar(&self, x: f64) -> f64 {
        match *self {
            Link::Identity => x,
            Link::Log => x.ln(),
            Link::Logit => (x / (1.0 - x)).ln(),
            Link::Interval(lo, hi) => {
                let u = (x - lo) / (hi - lo);
                (u / (1.0 - u)).ln()
            }
            Link::LogCholesky(_) => unreachable!(),
        }
    }

    /// Value at unconstrained `y`, with `ln |dx/dy|`.
    pub fn inverse(&self, y: &[f64], shape: Shape) -> (Value, f64) {
        match *self {
            Link::Identity => (Value::from_components(shape, y), 0.0),
            Link::Log => {
                let x: Vec<f64> = y.iter().map(|v| v.exp()).collect();
                (Value::from_components(shape, &x), y.iter().sum())
            }
            Link::Logit => {
                let x: Vec<f64> = y.iter().map(|&v| crate::graph::expr::inv_logit(v)).collect();
                let jac = y.iter().map(|&v| ln_logistic_jacobian(v)).sum();
                (Value::from_components(shape, &x), jac)
            }
            Link::Interval(lo, hi) => {
                let x: Vec<f64> =
                    y.iter().map(|&v| lo + (hi - lo) * crate::graph::expr::inv_logit(v)).collect();
                let jac = y.iter().map(|&v| (hi - lo).ln() + ln_logistic_jacobian(v)).sum();
                (Value::from_components(shape, &x), jac)
            }
            Link::LogCholesky(d) => {
                let mut l = DMatrix::zeros(d, d);
                let mut k = 0;
                let mut jac = d as f64 * std::f64::consts::LN_2;
                for i in 0..d {
                    for j in 0..=i {
                        if i == j {
                            l[(i, i)] = y[k].exp();
                            // dW/dL contributes (d - i) ln L_ii, dL/dy another ln L_ii
                            jac += (d - i) as f64 * y[k] + y[k];
                        } else {
                            l[(i, j)] = y[k];
                        }
                        k += 1;
                    }
                }
                let w = &l * l.transpose();
                (Value::Matrix(crate::linalg::symmetrize(&w)), jac)
            }
        }
    }
}
