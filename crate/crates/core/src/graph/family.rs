//! Distribution families and their log densities.

use super::value::{Shape, Value};
use crate::linalg;
use crate::special::{ln_gamma, ln_multigamma};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};
use std::fmt;

/// Support of an improper flat prior or a deterministic node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlatSupport {
    Real,
    Positive,
    Unit,
}

impl FlatSupport {
    pub fn contains(&self, x: f64) -> bool {
        match self {
            FlatSupport::Real => x.is_finite(),
            FlatSupport::Positive => x > 0.0 && x.is_finite(),
            FlatSupport::Unit => x > 0.0 && x < 1.0,
        }
    }

    /// The scale on which a flat prior is the Jeffreys prior.
    pub fn natural_transform(&self) -> Transform {
        match self {
            FlatSupport::Real => Transform::Identity,
            FlatSupport::Positive => Transform::Log,
            FlatSupport::Unit => Transform::Logit,
        }
    }
}

impl fmt::Display for FlatSupport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlatSupport::Real => "real",
            FlatSupport::Positive => "positive",
            FlatSupport::Unit => "unit",
        })
    }
}

/// Monotone transform `h` used for reference priors and difference functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Identity,
    Log,
    Logit,
}

impl Transform {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log => x.ln(),
            Transform::Logit => (x / (1.0 - x)).ln(),
        }
    }

    pub fn inverse(&self, y: f64) -> f64 {
        match self {
            Transform::Identity => y,
            Transform::Log => y.exp(),
            Transform::Logit => super::expr::inv_logit(y),
        }
    }

    /// `ln |h'(x)|`.
    pub fn ln_abs_derivative(&self, x: f64) -> f64 {
        match self {
            Transform::Identity => 0.0,
            Transform::Log => -x.ln(),
            Transform::Logit => -(x.ln() + (1.0 - x).ln()),
        }
    }

    /// Support on which the transform is a bijection onto the real line.
    pub fn domain(&self) -> FlatSupport {
        match self {
            Transform::Identity => FlatSupport::Real,
            Transform::Log => FlatSupport::Positive,
            Transform::Logit => FlatSupport::Unit,
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transform::Identity => "identity",
            Transform::Log => "log",
            Transform::Logit => "logit",
        })
    }
}

/// Distribution family tag. Parameters are supplied separately, in the
/// order given by [`Family::param_names`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Bernoulli,
    Binomial,
    Beta,
    /// Mean and precision.
    Normal,
    /// Mean vector and precision matrix.
    MultivariateNormal { dim: usize },
    /// Shape and rate.
    Gamma,
    /// Inverse-scale matrix `R` and degrees of freedom `k`; `E[W] = k R⁻¹`.
    Wishart { dim: usize },
    Uniform,
    /// Flat on the `scale`-transformed value; `dim` components, each in `support`.
    ImproperFlat { support: FlatSupport, scale: Transform, dim: usize },
}

/// Value-space support, used for initialisation, transforms and checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    Binary,
    Count,
    Real,
    Positive,
    Unit,
    /// Interval from the distribution's own parameters.
    Bounded,
    PositiveDefinite,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Bernoulli => "bernoulli",
            Family::Binomial => "binomial",
            Family::Beta => "beta",
            Family::Normal => "normal",
            Family::MultivariateNormal { .. } => "mvnormal",
            Family::Gamma => "gamma",
            Family::Wishart { .. } => "wishart",
            Family::Uniform => "uniform",
            Family::ImproperFlat { .. } => "flat",
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            Family::Bernoulli => &["p"],
            Family::Binomial => &["n", "p"],
            Family::Beta => &["a", "b"],
            Family::Normal => &["mean", "precision"],
            Family::MultivariateNormal { .. } => &["mean", "precision"],
            Family::Gamma => &["shape", "rate"],
            Family::Wishart { .. } => &["R", "df"],
            Family::Uniform => &["lower", "upper"],
            Family::ImproperFlat { .. } => &[],
        }
    }

    pub fn param_shapes(&self) -> Vec<Shape> {
        match *self {
            Family::MultivariateNormal { dim } => vec![Shape::Vector(dim), Shape::Matrix(dim, dim)],
            Family::Wishart { dim } => vec![Shape::Matrix(dim, dim), Shape::Scalar],
            _ => vec![Shape::Scalar; self.param_names().len()],
        }
    }

    pub fn value_shape(&self) -> Shape {
        match *self {
            Family::MultivariateNormal { dim } => Shape::Vector(dim),
            Family::Wishart { dim } => Shape::Matrix(dim, dim),
            Family::ImproperFlat { dim: 0, .. } => Shape::Scalar,
            Family::ImproperFlat { dim, .. } => Shape::Vector(dim),
            _ => Shape::Scalar,
        }
    }

    pub fn support(&self) -> Support {
        match self {
            Family::Bernoulli => Support::Binary,
            Family::Binomial => Support::Count,
            Family::Beta => Support::Unit,
            Family::Normal | Family::MultivariateNormal { .. } => Support::Real,
            Family::Gamma => Support::Positive,
            Family::Wishart { .. } => Support::PositiveDefinite,
            Family::Uniform => Support::Bounded,
            Family::ImproperFlat { support, .. } => match support {
                FlatSupport::Real => Support::Real,
                FlatSupport::Positive => Support::Positive,
                FlatSupport::Unit => Support::Unit,
            },
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Family::Bernoulli | Family::Binomial)
    }

    pub fn is_improper(&self) -> bool {
        matches!(self, Family::ImproperFlat { .. })
    }

    /// Natural-log density (or mass) of `x` given parameter values.
    ///
    /// Returns `-inf` outside the support or for invalid parameter values;
    /// returns `Err` only on shape mismatch.
    pub fn log_density(&self, x: &Value, params: &[Value]) -> Result<f64, String> {
        let expected = self.param_shapes();
        if params.len() != expected.len() {
            return Err(format!(
                "{} takes {} parameters, got {}",
                self.name(),
                expected.len(),
                params.len()
            ));
        }
        for (i, (p, s)) in params.iter().zip(&expected).enumerate() {
            if p.shape() != *s {
                return Err(format!(
                    "{} parameter `{}` must be {s}, got {}",
                    self.name(),
                    self.param_names()[i],
                    p.shape()
                ));
            }
        }
        if x.shape() != self.value_shape() {
            return Err(format!(
                "{} value must be {}, got {}",
                self.name(),
                self.value_shape(),
                x.shape()
            ));
        }
        Ok(self.log_density_unchecked(x, params))
    }

    /// [`Family::log_density`] without the shape checks; shapes must conform.
    pub(crate) fn log_density_unchecked(&self, x: &Value, params: &[Value]) -> f64 {
        let s = |i: usize| params[i].as_scalar().unwrap();
        match *self {
            Family::Bernoulli => {
                let (x, p) = (x.as_scalar().unwrap(), s(0));
                if !(0.0..=1.0).contains(&p) {
                    f64::NEG_INFINITY
                } else if x == 1.0 {
                    p.ln()
                } else if x == 0.0 {
                    (-p).ln_1p()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Family::Binomial => binomial_lpmf(x.as_scalar().unwrap(), s(0), s(1)),
            Family::Beta => beta_lpdf(x.as_scalar().unwrap(), s(0), s(1)),
            Family::Normal => normal_lpdf(x.as_scalar().unwrap(), s(0), s(1)),
            Family::MultivariateNormal { .. } => mvn_lpdf(
                x.as_vector().unwrap(),
                params[0].as_vector().unwrap(),
                params[1].as_matrix().unwrap(),
            ),
            Family::Gamma => gamma_lpdf(x.as_scalar().unwrap(), s(0), s(1)),
            Family::Wishart { .. } => {
                wishart_lpdf(x.as_matrix().unwrap(), params[0].as_matrix().unwrap(), s(1))
            }
            Family::Uniform => {
                let (x, lo, hi) = (x.as_scalar().unwrap(), s(0), s(1));
                if lo < hi && lo <= x && x <= hi {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Family::ImproperFlat { support, scale, .. } => {
                let mut total = 0.0;
                for c in x.components() {
                    if !support.contains(c) {
                        return f64::NEG_INFINITY;
                    }
                    total += scale.ln_abs_derivative(c);
                }
                total
            }
        }
    }
}

pub(crate) fn binomial_lpmf(k: f64, n: f64, p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) || n < 0.0 || n.fract() != 0.0 {
        return f64::NEG_INFINITY;
    }
    if k < 0.0 || k > n || k.fract() != 0.0 {
        return f64::NEG_INFINITY;
    }
    let ln_choose = ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0);
    ln_choose + xlogy(k, p) + xlog1py(n - k, -p)
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

fn xlog1py(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln_1p()
    }
}

pub(crate) fn beta_lpdf(x: f64, a: f64, b: f64) -> f64 {
    if !(a > 0.0 && b > 0.0) || !(x > 0.0 && x < 1.0) {
        return f64::NEG_INFINITY;
    }
    ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p()
}

pub(crate) fn normal_lpdf(x: f64, mean: f64, precision: f64) -> f64 {
    if !(precision > 0.0) || !x.is_finite() {
        return f64::NEG_INFINITY;
    }
    let d = x - mean;
    0.5 * precision.ln() - 0.5 * (2.0 * PI).ln() - 0.5 * precision * d * d
}

pub(crate) fn gamma_lpdf(x: f64, shape: f64, rate: f64) -> f64 {
    if !(shape > 0.0 && rate > 0.0) || !(x > 0.0) || !x.is_finite() {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

pub(crate) fn mvn_lpdf(x: &[f64], mean: &[f64], precision: &DMatrix<f64>) -> f64 {
    let d = x.len();
    let Some(chol) = linalg::cholesky(precision) else {
        return f64::NEG_INFINITY;
    };
    let diff = DVector::from_iterator(d, x.iter().zip(mean).map(|(a, b)| a - b));
    // (x-m)' P (x-m) = |L'(x-m)|²
    let z = chol.l().transpose() * &diff;
    0.5 * linalg::chol_logdet(&chol) - 0.5 * d as f64 * (2.0 * PI).ln() - 0.5 * z.norm_squared()
}

pub(crate) fn wishart_lpdf(w: &DMatrix<f64>, r: &DMatrix<f64>, k: f64) -> f64 {
    let p = w.nrows() as f64;
    if !(k > p - 1.0) || !linalg::is_symmetric(w, 1e-10) {
        return f64::NEG_INFINITY;
    }
    let (Some(cw), Some(cr)) = (linalg::cholesky(w), linalg::cholesky(r)) else {
        return f64::NEG_INFINITY;
    };
    let trace = (r * w).trace();
    0.5 * (k - p - 1.0) * linalg::chol_logdet(&cw) - 0.5 * trace + 0.5 * k * linalg::chol_logdet(&cr)
        - 0.5 * k * p * LN_2
        - ln_multigamma(p as usize, 0.5 * k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn binomial_matches_high_precision_reference() {
        // mpmath, 50 digits: log(binomial(882,12)) + 12 log(0.014) + 870 log(0.986)
        let reference = -2.166_506_715_572_524_4;
        let got = Family::Binomial
            .log_density(&Value::Scalar(12.0), &[Value::Scalar(882.0), Value::Scalar(0.014)])
            .unwrap();
        assert_relative_eq!(got, reference, max_relative = 1e-12);
    }

    #[test]
    fn standard_normal_at_mode() {
        let got = Family::Normal
            .log_density(&Value::Scalar(0.0), &[Value::Scalar(0.0), Value::Scalar(1.0)])
            .unwrap();
        assert_eq!(got, -0.5 * (2.0 * PI).ln());
    }

    #[test]
    fn beta_outside_support_is_negative_infinity() {
        let got = Family::Beta
            .log_density(&Value::Scalar(1.2), &[Value::Scalar(0.5), Value::Scalar(0.5)])
            .unwrap();
        assert_eq!(got, f64::NEG_INFINITY);
    }

    #[test]
    fn improper_flat_is_zero_on_support() {
        let fam = Family::ImproperFlat { support: FlatSupport::Real, scale: Transform::Identity, dim: 0 };
        assert_eq!(fam.log_density(&Value::Scalar(-3.5), &[]).unwrap(), 0.0);
        let fam = Family::ImproperFlat { support: FlatSupport::Positive, scale: Transform::Identity, dim: 0 };
        assert_eq!(fam.log_density(&Value::Scalar(-3.5), &[]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let err = Family::Normal.log_density(&Value::Vector(vec![0.0]), &[Value::Scalar(0.0), Value::Scalar(1.0)]);
        assert!(err.is_err());
        assert!(Family::Normal.log_density(&Value::Scalar(0.0), &[Value::Scalar(0.0)]).is_err());
    }

    #[test]
    fn mvn_with_identity_precision_is_sum_of_normals() {
        let x = Value::Vector(vec![0.3, -1.2]);
        let params = [Value::Vector(vec![0.1, 0.2]), Value::Matrix(DMatrix::identity(2, 2))];
        let got = Family::MultivariateNormal { dim: 2 }.log_density(&x, &params).unwrap();
        let expected = normal_lpdf(0.3, 0.1, 1.0) + normal_lpdf(-1.2, 0.2, 1.0);
        assert_relative_eq!(got, expected, max_relative = 1e-14);
    }

    #[test]
    fn wishart_one_dimensional_is_gamma() {
        // W ~ Wishart(R, k) in 1-D is Gamma(k/2, R/2).
        let (w, r, k) = (1.7, 0.6, 3.0);
        let got = wishart_lpdf(&DMatrix::from_element(1, 1, w), &DMatrix::from_element(1, 1, r), k);
        assert_relative_eq!(got, gamma_lpdf(w, k / 2.0, r / 2.0), max_relative = 1e-13);
    }
}
