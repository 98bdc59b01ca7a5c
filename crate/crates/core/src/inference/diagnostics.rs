//! Split-R̂ and effective sample size.

use super::Trace;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;
use thiserror::Error;

pub const MIN_RHAT_DRAWS: usize = 50;
pub const MIN_ESS_DRAWS: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticError {
    #[error("R-hat needs at least two chains, got {0}")]
    SingleChain(usize),
    #[error("need at least {needed} draws per chain, got {got}")]
    TooFewDraws { needed: usize, got: usize },
    #[error("chains have unequal lengths")]
    Ragged,
    #[error("no column `{0}` in trace")]
    UnknownColumn(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rhat {
    pub value: f64,
    /// Set when the within-chain variance is zero.
    pub degenerate: bool,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn check_lengths(chains: &[&[f64]], needed: usize) -> Result<usize, DiagnosticError> {
    let n = chains.first().map_or(0, |c| c.len());
    if chains.iter().any(|c| c.len() != n) {
        return Err(DiagnosticError::Ragged);
    }
    if n < needed {
        return Err(DiagnosticError::TooFewDraws { needed, got: n });
    }
    Ok(n)
}

/// Split-chain potential scale reduction factor of one scalar quantity.
pub fn rhat(chains: &[&[f64]]) -> Result<Rhat, DiagnosticError> {
    if chains.len() < 2 {
        return Err(DiagnosticError::SingleChain(chains.len()));
    }
    let n = check_lengths(chains, MIN_RHAT_DRAWS)?;
    let half = n / 2;
    let halves: Vec<&[f64]> = chains.iter().flat_map(|c| [&c[..half], &c[n - half..]]).collect();
    let m = halves.len() as f64;
    let h = half as f64;
    let means: Vec<f64> = halves.iter().map(|c| mean(c)).collect();
    let grand = mean(&means);
    let b = h / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = halves.iter().map(|c| var(c)).sum::<f64>() / m;
    if w <= 0.0 || !w.is_finite() {
        let value = if b > 0.0 { f64::INFINITY } else { 1.0 };
        return Ok(Rhat { value, degenerate: true });
    }
    let var_plus = (h - 1.0) / h * w + b / h;
    Ok(Rhat { value: (var_plus / w).sqrt(), degenerate: false })
}

/// Autocovariances at lags `0..n` (biased, divided by `n`).
fn autocovariance(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let m = mean(x);
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - m, 0.0)).collect();
    buf.resize(size, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for z in &mut buf {
        *z = Complex::new(z.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    buf[..n].iter().map(|z| z.re / (size as f64 * n as f64)).collect()
}

/// Geyer initial-monotone-positive-sequence ESS of a single chain,
/// clamped to `(0, n]`.
pub fn ess_single(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return n as f64;
    }
    let acov = autocovariance(x);
    if acov[0] <= 0.0 || !acov[0].is_finite() {
        return n as f64;
    }
    let rho = |t: usize| if t < n { acov[t] / acov[0] } else { 0.0 };
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let gamma = rho(2 * k) + rho(2 * k + 1);
        if gamma <= 0.0 {
            break;
        }
        let gamma = gamma.min(prev);
        sum += gamma;
        prev = gamma;
        k += 1;
    }
    let tau = -1.0 + 2.0 * sum;
    if tau <= 0.0 {
        return n as f64;
    }
    (n as f64 / tau).min(n as f64)
}

/// Sum of per-chain ESS, clamped to the total number of draws.
pub fn effective_sample_size(chains: &[&[f64]]) -> Result<f64, DiagnosticError> {
    let n = check_lengths(chains, MIN_ESS_DRAWS)?;
    let total: f64 = chains.iter().map(|c| ess_single(c)).sum();
    Ok(total.min((n * chains.len()) as f64))
}

#[derive(Debug, Clone, Serialize)]
pub struct ColumnDiagnostics {
    pub column: String,
    pub mean: f64,
    pub sd: f64,
    pub rhat: Option<Rhat>,
    pub ess: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub columns: Vec<ColumnDiagnostics>,
}

impl ConvergenceReport {
    /// Diagnostics for every column of `trace`. R̂ is omitted for single
    /// chains or short runs, ESS for runs under the draw floor.
    pub fn from_trace(trace: &Trace) -> ConvergenceReport {
        let columns = trace
            .columns()
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let chains: Vec<&[f64]> = (0..trace.n_chains()).map(|c| trace.column(c, k)).collect();
                let pooled = chains.concat();
                ColumnDiagnostics {
                    column: name.clone(),
                    mean: mean(&pooled),
                    sd: var(&pooled).sqrt(),
                    rhat: rhat(&chains).ok(),
                    ess: effective_sample_size(&chains).ok(),
                }
            })
            .collect();
        ConvergenceReport { columns }
    }

    /// Largest non-degenerate R̂.
    pub fn max_rhat(&self) -> Option<f64> {
        self.columns
            .iter()
            .filter_map(|c| c.rhat.filter(|r| !r.degenerate).map(|r| r.value))
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }

    pub fn get(&self, column: &str) -> Option<&ColumnDiagnostics> {
        self.columns.iter().find(|c| c.column == column)
    }
}
