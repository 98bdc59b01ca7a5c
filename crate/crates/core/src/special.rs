//! Special functions: log-gamma, regularized incomplete gamma, χ² distribution.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("{name} requires {requirement}, got {value}")]
    Argument { name: &'static str, requirement: &'static str, value: f64 },
    #[error("incomplete gamma failed to converge for a = {a}, x = {x}")]
    NoConvergence { a: f64, x: f64 },
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Log of the multivariate gamma function `Γ_p(a)`.
pub fn ln_multigamma(p: usize, a: f64) -> f64 {
    let p_f = p as f64;
    let mut out = 0.25 * p_f * (p_f - 1.0) * std::f64::consts::PI.ln();
    for j in 1..=p {
        out += ln_gamma(a + 0.5 * (1.0 - j as f64));
    }
    out
}

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;
const TINY: f64 = 1e-300;

fn check(name: &'static str, requirement: &'static str, value: f64, ok: bool) -> Result<(), DomainError> {
    if ok {
        Ok(())
    } else {
        Err(DomainError::Argument { name, requirement, value })
    }
}

/// `e^{-x} x^a / Γ(a)`, the common prefactor of the series and fraction.
fn prefactor(a: f64, x: f64) -> f64 {
    (a * x.ln() - x - ln_gamma(a)).exp()
}

fn lower_series(a: f64, x: f64) -> Result<f64, DomainError> {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            return Ok(sum * prefactor(a, x));
        }
    }
    Err(DomainError::NoConvergence { a, x })
}

/// Modified Lentz evaluation of the continued fraction for `Q(a, x)`.
fn upper_fraction(a: f64, x: f64) -> Result<f64, DomainError> {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            return Ok(h * prefactor(a, x));
        }
    }
    Err(DomainError::NoConvergence { a, x })
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> Result<f64, DomainError> {
    check("gamma_p", "a > 0", a, a > 0.0 && a.is_finite())?;
    check("gamma_p", "x >= 0", x, x >= 0.0 && !x.is_nan())?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    if x < a + 1.0 {
        lower_series(a, x)
    } else {
        Ok(1.0 - upper_fraction(a, x)?)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> Result<f64, DomainError> {
    check("gamma_q", "a > 0", a, a > 0.0 && a.is_finite())?;
    check("gamma_q", "x >= 0", x, x >= 0.0 && !x.is_nan())?;
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    if x < a + 1.0 {
        Ok(1.0 - lower_series(a, x)?)
    } else {
        upper_fraction(a, x)
    }
}

/// CDF of the χ² distribution with `k` degrees of freedom.
pub fn chi2_cdf(x: f64, k: f64) -> Result<f64, DomainError> {
    check("chi2_cdf", "k > 0", k, k > 0.0 && k.is_finite())?;
    check("chi2_cdf", "x >= 0", x, x >= 0.0 && !x.is_nan())?;
    gamma_p(0.5 * k, 0.5 * x)
}

/// Survival function `1 - F(x)`, computed without cancellation in the tail.
pub fn chi2_sf(x: f64, k: f64) -> Result<f64, DomainError> {
    check("chi2_sf", "k > 0", k, k > 0.0 && k.is_finite())?;
    check("chi2_sf", "x >= 0", x, x >= 0.0 && !x.is_nan())?;
    gamma_q(0.5 * k, 0.5 * x)
}

/// Density of the χ² distribution.
pub fn chi2_pdf(x: f64, k: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    let a = 0.5 * k;
    if x == 0.0 {
        return match k {
            k if k < 2.0 => f64::INFINITY,
            2.0 => 0.5,
            _ => 0.0,
        };
    }
    ((a - 1.0) * x.ln() - 0.5 * x - a * std::f64::consts::LN_2 - ln_gamma(a)).exp()
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}
