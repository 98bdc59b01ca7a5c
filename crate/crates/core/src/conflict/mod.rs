//! Conflict p-values from split-copy differences or paired discrete posteriors.

mod kde;

pub use crate::special::chi2_cdf;

use crate::inference::ess_single;
use crate::split::DeltaSamples;
use crate::linalg::{condition_number, forward_substitute, robust_cholesky};
use crate::special::{chi2_pdf, chi2_sf};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Condition number above which a sample covariance is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;
pub const MIN_KDE_DRAWS: usize = 500;
pub const MIN_KDE_MULTI_DRAWS: usize = 2000;
pub const MAX_KDE_DIM: usize = 4;
/// Skewness bound under which `auto` treats a component as symmetric.
pub const SYMMETRY_SKEW: f64 = 0.5;
/// Excess-kurtosis bound under which `auto` treats a component as Gaussian.
pub const GAUSSIAN_KURTOSIS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Discrete,
    OneSidedLower,
    OneSidedUpper,
    TwoSided,
    Kde,
    Chi2,
    Mahalanobis,
    KdeMultivariate,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Discrete,
        Method::OneSidedLower,
        Method::OneSidedUpper,
        Method::TwoSided,
        Method::Kde,
        Method::Chi2,
        Method::Mahalanobis,
        Method::KdeMultivariate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Discrete => "discrete",
            Method::OneSidedLower => "one-sided-lower",
            Method::OneSidedUpper => "one-sided-upper",
            Method::TwoSided => "two-sided",
            Method::Kde => "kde",
            Method::Chi2 => "chi2",
            Method::Mahalanobis => "mahalanobis",
            Method::KdeMultivariate => "kde-multivariate",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .iter()
            .find(|m| m.name() == s)
            .copied()
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aux {
    /// KDE bandwidth per dimension.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<Vec<f64>>,
    /// p-values at 0.5× and 2× the bandwidth.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth_sensitivity: Option<Vec<(f64, f64)>>,
    /// Delta-method standard error of the p-value from the KDE's own noise
    /// in the density at 0. Not part of `mc_se`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub threshold_se: Option<f64>,
    /// Point on the far side of the mode with the same density as 0.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density_matched_point: Option<f64>,
    /// Standardised discrepancy of 0 from the sample mean.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discrepancy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub df: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub condition_number: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub skewness: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub excess_kurtosis: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictResult {
    pub p_value: f64,
    pub method: Method,
    pub mc_se: f64,
    /// Effective sample size behind `mc_se`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ess: Option<f64>,
    pub n_draws: usize,
    pub aux: Aux,
}

impl ConflictResult {
    /// One-line summary, e.g. `c = 0.018 (two-sided, mc_se 0.002)`.
    pub fn summary(&self) -> String {
        let mut s = format!("c = {:.4} ({}, mc_se {:.4}", self.p_value, self.method, self.mc_se);
        if let Some(h) = &self.aux.bandwidth {
            let hs: Vec<String> = h.iter().map(|v| format!("{v:.3}")).collect();
            s.push_str(&format!(", bw {}", hs.join("/")));
        }
        s.push(')');
        s
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConflictError {
    #[error("no samples")]
    Empty,
    #[error("{method} needs at least {needed} draws, got {got}")]
    TooFewDraws { method: Method, needed: usize, got: usize },
    #[error("{method} does not apply to {k}-dimensional differences")]
    Dimension { method: Method, k: usize },
    #[error("degenerate samples: {0}")]
    Degenerate(String),
    #[error("sample covariance is singular (condition number {0:.3e}); drop or combine components")]
    Singular(f64),
    #[error("probability vectors have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("probability vector is not normalised (sums to {0})")]
    NotNormalized(f64),
    #[error("probability vector has a negative or non-finite entry")]
    InvalidProbability,
    #[error("bandwidth must be positive and finite")]
    InvalidBandwidth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    #[default]
    Silverman,
    /// One value for every dimension, or one per dimension.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct KdeConfig {
    pub kernel: Kernel,
    pub bandwidth: Bandwidth,
}

impl KdeConfig {
    pub fn fixed(h: f64) -> KdeConfig {
        KdeConfig { kernel: Kernel::Gaussian, bandwidth: Bandwidth::Fixed(vec![h]) }
    }
}

/// `c = Σ_k pa[k]·pb[k]`.
pub fn conflict_discrete(pa: &[f64], pb: &[f64]) -> Result<ConflictResult, ConflictError> {
    if pa.len() != pb.len() {
        return Err(ConflictError::LengthMismatch(pa.len(), pb.len()));
    }
    if pa.is_empty() {
        return Err(ConflictError::Empty);
    }
    for p in [pa, pb] {
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ConflictError::InvalidProbability);
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(ConflictError::NotNormalized(s));
        }
    }
    let c: f64 = pa.iter().zip(pb).map(|(a, b)| a * b).sum();
    Ok(ConflictResult {
        p_value: c.clamp(0.0, 1.0),
        method: Method::Discrete,
        mc_se: 0.0,
        ess: None,
        n_draws: 0,
        aux: Aux::default(),
    })
}

/// Conservative ESS of a per-draw stream: chains × the smallest per-chain ESS.
fn stream_ess(delta: &DeltaSamples, stream: &[f64]) -> f64 {
    let n = delta.n_draws().max(1);
    let min = stream.chunks(n).map(ess_single).fold(f64::INFINITY, f64::min);
    delta.n_chains() as f64 * min
}

fn binomial_se(p: f64, ess: f64) -> f64 {
    (p * (1.0 - p) / ess).max(0.0).sqrt()
}

fn moments(x: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - m;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    (m, m2 / n, m3 / n, m4 / n)
}

/// Sample skewness and excess kurtosis per component.
pub fn shape_statistics(delta: &DeltaSamples) -> (Vec<f64>, Vec<f64>) {
    (0..delta.k())
        .map(|j| {
            let (_, m2, m3, m4) = moments(&delta.pooled(j));
            if m2 > 0.0 {
                (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
            } else {
                (0.0, 0.0)
            }
        })
        .unzip()
}

fn base_aux(delta: &DeltaSamples) -> Aux {
    let (skewness, excess_kurtosis) = shape_statistics(delta);
    Aux { skewness, excess_kurtosis, ..Aux::default() }
}

/// Orientation making the computation identical for `δ` and `−δ`: the first
/// nonzero component mean is made nonnegative.
fn canonical_sign(delta: &DeltaSamples) -> f64 {
    for j in 0..delta.k() {
        let m: f64 = delta.pooled(j).iter().sum();
        if m > 0.0 {
            return 1.0;
        }
        if m < 0.0 {
            return -1.0;
        }
    }
    1.0
}

fn require_scalar(delta: &DeltaSamples, method: Method) -> Result<Vec<f64>, ConflictError> {
    if delta.k() != 1 {
        return Err(ConflictError::Dimension { method, k: delta.k() });
    }
    if delta.total() == 0 {
        return Err(ConflictError::Empty);
    }
    Ok(delta.pooled(0))
}

/// Half-unit counts of draws above zero (ties count one half each).
fn half_counts_above(x: &[f64]) -> (Vec<f64>, u64) {
    let mut total = 0u64;
    let ind = x
        .iter()
        .map(|&v| {
            let h = if v > 0.0 {
                2
            } else if v == 0.0 {
                1
            } else {
                0
            };
            total += h;
            h as f64 / 2.0
        })
        .collect();
    (ind, total)
}

fn warn_short(method: Method, n: usize) {
    if n < 100 {
        log::warn!("{method}: only {n} draws");
    }
}

/// `c = 2·min(Pr(δ>0), 1 − Pr(δ>0))`.
pub fn conflict_two_sided(delta: &DeltaSamples) -> Result<ConflictResult, ConflictError> {
    let sign = canonical_sign(delta);
    let x: Vec<f64> = require_scalar(delta, Method::TwoSided)?.into_iter().map(|v| sign * v).collect();
    warn_short(Method::TwoSided, x.len());
    let n2 = 2 * x.len() as u64;
    let (ind, above) = half_counts_above(&x);
    let c = 2.0 * above.min(n2 - above) as f64 / n2 as f64;
    let q = above as f64 / n2 as f64;
    let ess = stream_ess(delta, &ind);
    Ok(ConflictResult {
        p_value: c,
        method: Method::TwoSided,
        mc_se: 2.0 * binomial_se(q, ess),
        ess: Some(ess),
        n_draws: x.len(),
        aux: base_aux(delta),
    })
}

/// `lower`: proportion of `δ < 0`; `upper`: proportion of `δ > 0`. Ties count half.
pub fn conflict_one_sided(delta: &DeltaSamples, lower: bool) -> Result<ConflictResult, ConflictError> {
    let method = if lower { Method::OneSidedLower } else { Method::OneSidedUpper };
    let x = require_scalar(delta, method)?;
    warn_short(method, x.len());
    let n2 = 2 * x.len() as u64;
    let (mut ind, above) = half_counts_above(&x);
    let count = if lower {
        for v in &mut ind {
            *v = 1.0 - *v;
        }
        n2 - above
    } else {
        above
    };
    let c = count as f64 / n2 as f64;
    let ess = stream_ess(delta, &ind);
    Ok(ConflictResult {
        p_value: c,
        method,
        mc_se: binomial_se(c, ess),
        ess: Some(ess),
        n_draws: x.len(),
        aux: base_aux(delta),
    })
}

/// Median-based quantile pair symmetric under negation.
fn iqr(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    let lo = ((n - 1) as f64 * 0.25).round() as usize;
    sorted[n - 1 - lo] - sorted[lo]
}

fn sd(x: &[f64]) -> f64 {
    let (_, m2, _, _) = moments(x);
    (m2 * x.len() as f64 / (x.len() as f64 - 1.0)).sqrt()
}

/// Robust spread `min(sd, IQR/1.34)`, falling back to `sd` when the IQR is 0.
fn spread(x: &[f64]) -> f64 {
    let s = sd(x);
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let r = iqr(&sorted) / 1.34;
    if r > 0.0 {
        s.min(r)
    } else {
        s
    }
}

/// Silverman's rule per dimension: `0.9·spread·n^(−1/5)` for one dimension,
/// the normal-reference `(4/(k+2))^(1/(k+4))·spread·n^(−1/(k+4))` otherwise.
pub fn silverman_bandwidth(delta: &DeltaSamples) -> Vec<f64> {
    let k = delta.k();
    let n = delta.total() as f64;
    (0..k)
        .map(|j| {
            let s = spread(&delta.pooled(j));
            if k == 1 {
                0.9 * s * n.powf(-0.2)
            } else {
                (4.0 / (k as f64 + 2.0)).powf(1.0 / (k as f64 + 4.0)) * s * n.powf(-1.0 / (k as f64 + 4.0))
            }
        })
        .collect()
}

fn resolve_bandwidth(delta: &DeltaSamples, cfg: &KdeConfig) -> Result<Vec<f64>, ConflictError> {
    let h = match &cfg.bandwidth {
        Bandwidth::Silverman => silverman_bandwidth(delta),
        Bandwidth::Fixed(v) if v.len() == 1 => vec![v[0]; delta.k()],
        Bandwidth::Fixed(v) if v.len() == delta.k() => v.clone(),
        Bandwidth::Fixed(_) => return Err(ConflictError::InvalidBandwidth),
    };
    if h.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        if matches!(cfg.bandwidth, Bandwidth::Silverman) {
            return Err(ConflictError::Degenerate("zero-variance samples".into()));
        }
        return Err(ConflictError::InvalidBandwidth);
    }
    Ok(h)
}

fn rows(delta: &DeltaSamples, sign: f64) -> Vec<Vec<f64>> {
    (0..delta.total()).map(|i| delta.row(i).into_iter().map(|v| sign * v).collect()).collect()
}

/// Proportion of draws whose KDE density is below the density at 0.
fn kde_proportion(points: &[Vec<f64>], h: Vec<f64>) -> (Vec<f64>, f64, f64, Vec<f64>) {
    let k = kde::Kde::new(points, h);
    let origin = vec![0.0; points[0].len()];
    let (dens, f0) = k.at_points(&origin);
    let ind: Vec<f64> = dens.iter().map(|&d| if d < f0 { 1.0 } else { 0.0 }).collect();
    let p = ind.iter().sum::<f64>() / ind.len() as f64;
    (ind, p, f0, dens)
}

/// `g(f0)·sd(f̂(0))`, where `g` is the density of `f̂(δ)` at `f0`, estimated
/// from the draws within 3% of `f0`, and `sd(f̂(0))` comes from the spread
/// of the kernel terms at 0.
fn threshold_se(points: &[Vec<f64>], h: &[f64], dens: &[f64], f0: f64, ess: f64) -> f64 {
    if !(f0 > 0.0) {
        return 0.0;
    }
    let n = points.len() as f64;
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).powf(h.len() as f64 / 2.0) * h.iter().product::<f64>());
    let terms: Vec<f64> = points
        .iter()
        .map(|p| norm * (-0.5 * p.iter().zip(h).map(|(x, h)| (x / h).powi(2)).sum::<f64>()).exp())
        .collect();
    let mean = terms.iter().sum::<f64>() / n;
    let var = terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let eps = 0.03;
    let near = dens.iter().filter(|&&d| (d - f0).abs() <= eps * f0).count() as f64;
    let g = near / (n * 2.0 * eps * f0);
    g * (var / ess).sqrt()
}

/// Result, oriented points and bandwidths.
type KdeOutput = (ConflictResult, Vec<Vec<f64>>, Vec<f64>);

fn kde_common(delta: &DeltaSamples, cfg: &KdeConfig, method: Method) -> Result<KdeOutput, ConflictError> {
    let sign = canonical_sign(delta);
    let h = resolve_bandwidth(delta, cfg)?;
    let points = rows(delta, sign);
    let (ind, p, f0, dens) = kde_proportion(&points, h.clone());
    let ess = stream_ess(delta, &ind);
    let threshold_se = threshold_se(&points, &h, &dens, f0, ess);
    let sensitivity = [0.5, 2.0]
        .iter()
        .map(|&f| (f, kde_proportion(&points, h.iter().map(|v| v * f).collect()).1))
        .collect();
    let mut aux = base_aux(delta);
    aux.bandwidth = Some(h.clone());
    aux.bandwidth_sensitivity = Some(sensitivity);
    aux.threshold_se = Some(threshold_se);
    let result =
        ConflictResult { p_value: p, method, mc_se: binomial_se(p, ess), ess: Some(ess), n_draws: points.len(), aux };
    Ok((result, points, h))
}

/// `c = Pr{p(δ) < p(0)}` under a Gaussian KDE of scalar differences.
pub fn conflict_kde_univariate(delta: &DeltaSamples, cfg: &KdeConfig) -> Result<ConflictResult, ConflictError> {
    require_scalar(delta, Method::Kde)?;
    if delta.total() < MIN_KDE_DRAWS {
        return Err(ConflictError::TooFewDraws { method: Method::Kde, needed: MIN_KDE_DRAWS, got: delta.total() });
    }
    let sign = canonical_sign(delta);
    let (mut result, points, h) = kde_common(delta, cfg, Method::Kde)?;
    result.aux.density_matched_point = matched_point(&points, h[0]).map(|k| k * sign);
    Ok(result)
}

/// The point across the mode from 0 where the density equals the density at 0.
fn matched_point(points: &[Vec<f64>], h: f64) -> Option<f64> {
    let est = kde::Kde::new(points, vec![h]);
    let (lo, hi) = points.iter().fold((0.0f64, 0.0f64), |(a, b), p| (a.min(p[0]), b.max(p[0])));
    let curve = est.curve(lo - 3.0 * h, hi + 3.0 * h, 2001);
    let f0 = est.exact(&[0.0]);
    let (mode_i, _) = curve.iter().enumerate().max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))?;
    let mode = curve[mode_i].0;
    let pairs: Vec<_> = if mode >= 0.0 {
        curve[mode_i..].windows(2).collect()
    } else {
        curve[..=mode_i].windows(2).rev().collect()
    };
    for w in pairs {
        let (a, b) = if mode >= 0.0 { (w[0], w[1]) } else { (w[1], w[0]) };
        if (a.1 - f0) * (b.1 - f0) <= 0.0 && a.1 != b.1 {
            let t = (a.1 - f0) / (a.1 - b.1);
            return Some(a.0 + t * (b.0 - a.0));
        }
    }
    None
}

/// Density of a scalar difference on an evenly spaced grid, for plotting.
pub fn density_grid(
    delta: &DeltaSamples,
    component: usize,
    bandwidth: Option<f64>,
    m: usize,
) -> Result<Vec<(f64, f64)>, ConflictError> {
    let x = delta.pooled(component);
    if x.is_empty() {
        return Err(ConflictError::Empty);
    }
    let n = x.len() as f64;
    let h = bandwidth.unwrap_or_else(|| 0.9 * spread(&x) * n.powf(-0.2));
    if !(h.is_finite() && h > 0.0) {
        return Err(ConflictError::Degenerate("zero-variance samples".into()));
    }
    let pts: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
    let (lo, hi) = x.iter().fold((0.0f64, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    Ok(kde::Kde::new(&pts, vec![h]).curve(lo - 3.0 * h, hi + 3.0 * h, m))
}

struct Standardised {
    mean: Vec<f64>,
    l: DMatrix<f64>,
    condition: f64,
    discrepancy: f64,
}

fn standardise(delta: &DeltaSamples, method: Method, sign: f64) -> Result<Standardised, ConflictError> {
    let k = delta.k();
    let n = delta.total();
    if k == 0 || n == 0 {
        return Err(ConflictError::Empty);
    }
    if n <= k {
        return Err(ConflictError::TooFewDraws { method, needed: k + 1, got: n });
    }
    let cols: Vec<Vec<f64>> = (0..k).map(|j| delta.pooled(j).into_iter().map(|v| sign * v).collect()).collect();
    let mean: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let mut cov = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..=a {
            let s: f64 = cols[a].iter().zip(&cols[b]).map(|(x, y)| (x - mean[a]) * (y - mean[b])).sum();
            cov[(a, b)] = s / (n as f64 - 1.0);
            cov[(b, a)] = cov[(a, b)];
        }
    }
    if cov.iter().all(|v| *v == 0.0) {
        return Err(ConflictError::Degenerate("zero-variance samples".into()));
    }
    let rc = robust_cholesky(&cov, MAX_CONDITION).ok_or_else(|| ConflictError::Singular(condition_number(&cov)))?;
    let l = rc.chol.l();
    let discrepancy = quad(&l, &mean, &mut vec![0.0; k]);
    Ok(Standardised { mean, l, condition: rc.condition_number, discrepancy })
}

/// `x' (L L')⁻¹ x`.
fn quad(l: &DMatrix<f64>, x: &[f64], work: &mut [f64]) -> f64 {
    forward_substitute(l, x, work);
    work.iter().map(|z| z * z).sum()
}

/// Minimum over components of the conservative per-component ESS.
fn component_ess(delta: &DeltaSamples) -> f64 {
    (0..delta.k()).map(|j| stream_ess(delta, &delta.pooled(j))).fold(f64::INFINITY, f64::min)
}

/// `c = 1 − F_{χ²_k}(Δ)` with `Δ = mean' Cov⁻¹ mean`.
pub fn conflict_chi2(delta: &DeltaSamples) -> Result<ConflictResult, ConflictError> {
    let st = standardise(delta, Method::Chi2, canonical_sign(delta))?;
    let k = delta.k();
    let c = chi2_sf(st.discrepancy, k as f64).map_err(|e| ConflictError::Degenerate(e.to_string()))?;
    let ess = component_ess(delta);
    // delta method: Var(Δ) ≈ 4Δ/ESS
    let dens = chi2_pdf(st.discrepancy, k as f64);
    let mc_se = if st.discrepancy > 0.0 { dens * 2.0 * (st.discrepancy / ess).sqrt() } else { 0.0 };
    let mut aux = base_aux(delta);
    aux.discrepancy = Some(st.discrepancy);
    aux.df = Some(k);
    aux.condition_number = Some(st.condition);
    Ok(ConflictResult { p_value: c.clamp(0.0, 1.0), method: Method::Chi2, mc_se, ess: Some(ess), n_draws: delta.total(), aux })
}

/// `c = Pr{Δ_i > Δ}` with `Δ_i` the Mahalanobis distance of draw `i` from
/// the sample mean and `Δ` that of 0. Ties count half.
pub fn conflict_mahalanobis(delta: &DeltaSamples) -> Result<ConflictResult, ConflictError> {
    let sign = canonical_sign(delta);
    let st = standardise(delta, Method::Mahalanobis, sign)?;
    let k = delta.k();
    let mut half = 0u64;
    let mut work = vec![0.0; k];
    let mut r = vec![0.0; k];
    let ind: Vec<f64> = (0..delta.total())
        .map(|i| {
            for (j, v) in delta.row(i).into_iter().enumerate() {
                r[j] = sign * v - st.mean[j];
            }
            let d = quad(&st.l, &r, &mut work);
            let h = if d > st.discrepancy {
                2
            } else if d == st.discrepancy {
                1
            } else {
                0
            };
            half += h;
            h as f64 / 2.0
        })
        .collect();
    let c = half as f64 / (2 * delta.total()) as f64;
    let ess = stream_ess(delta, &ind);
    let mut aux = base_aux(delta);
    aux.discrepancy = Some(st.discrepancy);
    aux.df = Some(k);
    aux.condition_number = Some(st.condition);
    Ok(ConflictResult {
        p_value: c,
        method: Method::Mahalanobis,
        mc_se: binomial_se(c, ess),
        ess: Some(ess),
        n_draws: delta.total(),
        aux,
    })
}

/// `c = Pr{p(δ) < p(0)}` under a product-Gaussian KDE, `2 ≤ k ≤ 4`.
pub fn conflict_kde_multivariate(delta: &DeltaSamples, cfg: &KdeConfig) -> Result<ConflictResult, ConflictError> {
    let k = delta.k();
    if !(2..=MAX_KDE_DIM).contains(&k) {
        return Err(ConflictError::Dimension { method: Method::KdeMultivariate, k });
    }
    if delta.total() < MIN_KDE_MULTI_DRAWS {
        return Err(ConflictError::TooFewDraws {
            method: Method::KdeMultivariate,
            needed: MIN_KDE_MULTI_DRAWS,
            got: delta.total(),
        });
    }
    Ok(kde_common(delta, cfg, Method::KdeMultivariate)?.0)
}

/// Method used by `auto`: two-sided for roughly symmetric scalar differences,
/// univariate KDE otherwise; χ² for Gaussian-looking vectors, Mahalanobis
/// otherwise.
pub fn auto_method(delta: &DeltaSamples) -> Method {
    let (skew, kurt) = shape_statistics(delta);
    let m = if delta.k() == 1 {
        if skew[0].abs() < SYMMETRY_SKEW || delta.total() < MIN_KDE_DRAWS {
            Method::TwoSided
        } else {
            Method::Kde
        }
    } else if skew.iter().all(|s| s.abs() < SYMMETRY_SKEW) && kurt.iter().all(|k| k.abs() < GAUSSIAN_KURTOSIS) {
        Method::Chi2
    } else {
        Method::Mahalanobis
    };
    log::info!("auto method: {m} (skewness {skew:.3?}, excess kurtosis {kurt:.3?})");
    m
}

/// Dispatches on `method`; `Discrete` is not available from differences.
pub fn conflict(delta: &DeltaSamples, method: Method, cfg: &KdeConfig) -> Result<ConflictResult, ConflictError> {
    match method {
        Method::OneSidedLower => conflict_one_sided(delta, true),
        Method::OneSidedUpper => conflict_one_sided(delta, false),
        Method::TwoSided => conflict_two_sided(delta),
        Method::Kde => conflict_kde_univariate(delta, cfg),
        Method::Chi2 => conflict_chi2(delta),
        Method::Mahalanobis => conflict_mahalanobis(delta),
        Method::KdeMultivariate => conflict_kde_multivariate(delta, cfg),
        Method::Discrete => Err(ConflictError::Dimension { method, k: delta.k() }),
    }
}

/// A fixed method or `auto`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Selection {
    #[default]
    Auto,
    Fixed(Method),
}

impl Selection {
    pub fn resolve(&self, delta: &DeltaSamples) -> Method {
        match self {
            Selection::Auto => auto_method(delta),
            Selection::Fixed(m) => *m,
        }
    }
}

impl FromStr for Selection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            Ok(Selection::Auto)
        } else {
            s.parse().map(Selection::Fixed)
        }
    }
}

impl TryFrom<String> for Selection {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Selection> for String {
    fn from(s: Selection) -> String {
        s.to_string()
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selection::Auto => f.write_str("auto"),
            Selection::Fixed(m) => m.fmt(f),
        }
    }
}
