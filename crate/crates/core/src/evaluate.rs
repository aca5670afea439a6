//! Interval coverage, aggregate pinball score and the Kupiec and
//! Christoffersen likelihood-ratio tests.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{pinball_loss, HourlyTimeSeries, QuantileForecastSurface, QuantileLevel, Timestamp};
use crate::stats::chi_square_quantile;

#[derive(Debug, Error)]
pub enum EvaluateError {
    #[error("quantile level {level} required for the {alpha}% interval is not on the grid")]
    MissingLevel { alpha: f64, level: f64 },
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub nominal_alpha: f64,
    pub lower_level: QuantileLevel,
    pub upper_level: QuantileLevel,
    pub timestamps: Vec<Timestamp>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    /// Percent of observations inside the closed interval.
    pub aec: f64,
    pub hits: Vec<bool>,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrTestResult {
    pub statistic: f64,
    pub dof: u32,
    pub significance: f64,
    pub critical_value: f64,
    pub reject: bool,
    /// All hits or no hits: the statistic uses `0 ln 0 = 0` and is of
    /// limited use.
    pub degenerate: bool,
}

fn check_alpha(alpha: f64) -> Result<(), EvaluateError> {
    if alpha.is_finite() && alpha > 0.0 && alpha < 100.0 {
        Ok(())
    } else {
        Err(EvaluateError::Invalid(format!("alpha {alpha} must lie in (0, 100)")))
    }
}

/// Interval bounds from the `(100 - alpha)/2` and `(100 + alpha)/2`
/// percentile columns. No interpolation between grid levels.
pub fn build_interval(surface: &QuantileForecastSurface, alpha: f64) -> Result<PredictionInterval, EvaluateError> {
    check_alpha(alpha)?;
    let lo = (100.0 - alpha) / 200.0;
    let hi = (100.0 + alpha) / 200.0;
    let grid = surface.grid();
    let find = |k: f64| grid.position(k).ok_or(EvaluateError::MissingLevel { alpha, level: k });
    let (jl, ju) = (find(lo)?, find(hi)?);
    Ok(PredictionInterval {
        nominal_alpha: alpha,
        lower_level: grid.levels()[jl],
        upper_level: grid.levels()[ju],
        timestamps: surface.timestamps().to_vec(),
        lower: surface.column(jl),
        upper: surface.column(ju),
    })
}

fn check_aligned(a: &[Timestamp], b: &[Timestamp]) -> Result<(), EvaluateError> {
    if a.len() != b.len() {
        return Err(EvaluateError::Alignment(format!("{} forecasts for {} actuals", a.len(), b.len())));
    }
    if let Some(i) = a.iter().zip(b).position(|(x, y)| x != y) {
        return Err(EvaluateError::Alignment(format!("timestamps differ at row {i}")));
    }
    Ok(())
}

pub fn aec(interval: &PredictionInterval, actual: &HourlyTimeSeries) -> Result<CoverageResult, EvaluateError> {
    check_aligned(&interval.timestamps, actual.timestamps())?;
    Ok(coverage_values(&interval.lower, &interval.upper, actual.values()))
}

/// Coverage from raw aligned slices.
pub fn coverage_values(lower: &[f64], upper: &[f64], actual: &[f64]) -> CoverageResult {
    let hits: Vec<bool> = actual
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(p, (l, u))| l <= p && p <= u)
        .collect();
    let n = hits.len();
    let inside = hits.iter().filter(|h| **h).count();
    let aec = if n == 0 { f64::NAN } else { 100.0 * inside as f64 / n as f64 };
    CoverageResult { aec, hits, n }
}

/// Grand mean of pinball losses over timestamps and grid levels.
pub fn aps(surface: &QuantileForecastSurface, actual: &HourlyTimeSeries) -> Result<f64, EvaluateError> {
    check_aligned(surface.timestamps(), actual.timestamps())?;
    Ok(aps_per_level(surface, actual.values()).iter().sum::<f64>() / surface.grid().len() as f64)
}

/// Mean pinball loss of each grid level.
pub fn aps_per_level(surface: &QuantileForecastSurface, actual: &[f64]) -> Vec<f64> {
    let n = actual.len() as f64;
    let values = surface.values();
    surface
        .grid()
        .levels()
        .iter()
        .enumerate()
        .map(|(j, &k)| actual.iter().enumerate().map(|(i, p)| pinball_loss(k, p - values[(i, j)])).sum::<f64>() / n)
        .collect()
}

/// `a ln b` with `0 ln 0 = 0`.
fn xlogy(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * b.ln()
    }
}

fn bernoulli_ll(ones: f64, zeros: f64, p: f64) -> f64 {
    xlogy(ones, p) + xlogy(zeros, 1.0 - p)
}

fn check_significance(s: f64) -> Result<(), EvaluateError> {
    if s.is_finite() && s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(EvaluateError::Invalid(format!("significance {s} must lie in (0, 1)")))
    }
}

fn result(statistic: f64, dof: u32, significance: f64, degenerate: bool) -> LrTestResult {
    let critical_value = chi_square_quantile(1.0 - significance, dof);
    // Round-off can leave a tiny negative value when the likelihoods tie.
    let statistic = statistic.max(0.0);
    LrTestResult { statistic, dof, significance, critical_value, reject: statistic > critical_value, degenerate }
}

fn lr_uc(hits: &[bool], alpha: f64) -> f64 {
    let n = hits.len() as f64;
    let n1 = hits.iter().filter(|h| **h).count() as f64;
    let p = alpha / 100.0;
    let pi = n1 / n;
    -2.0 * (bernoulli_ll(n1, n - n1, p) - bernoulli_ll(n1, n - n1, pi))
}

/// Unconditional coverage: hit proportion against `alpha / 100`, one degree
/// of freedom.
pub fn kupiec_test(hits: &[bool], alpha: f64, significance: f64) -> Result<LrTestResult, EvaluateError> {
    check_alpha(alpha)?;
    check_significance(significance)?;
    if hits.is_empty() {
        return Err(EvaluateError::Invalid("empty hit sequence".into()));
    }
    let n1 = hits.iter().filter(|h| **h).count();
    Ok(result(lr_uc(hits, alpha), 1, significance, n1 == 0 || n1 == hits.len()))
}

/// Independence statistic of a first-order Markov chain against Bernoulli.
pub fn lr_independence(hits: &[bool]) -> f64 {
    let mut c = [[0.0f64; 2]; 2];
    for w in hits.windows(2) {
        c[usize::from(w[0])][usize::from(w[1])] += 1.0;
    }
    let [[n00, n01], [n10, n11]] = c;
    let pi01 = if n00 + n01 > 0.0 { n01 / (n00 + n01) } else { 0.0 };
    let pi11 = if n10 + n11 > 0.0 { n11 / (n10 + n11) } else { 0.0 };
    let pi = (n01 + n11) / (n00 + n01 + n10 + n11);
    let restricted = bernoulli_ll(n01 + n11, n00 + n10, pi);
    let markov = bernoulli_ll(n01, n00, pi01) + bernoulli_ll(n11, n10, pi11);
    (-2.0 * (restricted - markov)).max(0.0)
}

/// Conditional coverage `LR_cc = LR_uc + LR_ind`, two degrees of freedom.
pub fn christoffersen_test(hits: &[bool], alpha: f64, significance: f64) -> Result<LrTestResult, EvaluateError> {
    check_alpha(alpha)?;
    check_significance(significance)?;
    if hits.len() < 2 {
        return Err(EvaluateError::Invalid("at least two observations required".into()));
    }
    let degenerate = hits.iter().all(|h| *h == hits[0]);
    Ok(result(lr_uc(hits, alpha) + lr_independence(hits), 2, significance, degenerate))
}

/// One metrics row per (variant, alpha).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub variant: String,
    pub alpha: f64,
    pub aec: f64,
    pub n: usize,
    pub kupiec_statistic: f64,
    pub kupiec_reject: bool,
    pub christoffersen_statistic: f64,
    pub christoffersen_reject: bool,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApsRow {
    pub variant: String,
    pub aps: f64,
}

/// Coverage and both tests for one interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaEvaluation {
    pub alpha: f64,
    pub coverage: CoverageResult,
    pub kupiec: LrTestResult,
    pub christoffersen: LrTestResult,
}

impl AlphaEvaluation {
    pub fn row(&self, variant: &str) -> MetricsRow {
        MetricsRow {
            variant: variant.to_string(),
            alpha: self.alpha,
            aec: self.coverage.aec,
            n: self.coverage.n,
            kupiec_statistic: self.kupiec.statistic,
            kupiec_reject: self.kupiec.reject,
            christoffersen_statistic: self.christoffersen.statistic,
            christoffersen_reject: self.christoffersen.reject,
            degenerate: self.kupiec.degenerate || self.christoffersen.degenerate,
        }
    }
}

/// Full evaluation of a surface at several interval widths.
pub fn evaluate_surface(
    surface: &QuantileForecastSurface,
    actual: &HourlyTimeSeries,
    alphas: &[f64],
    significance: f64,
) -> Result<(Vec<AlphaEvaluation>, f64), EvaluateError> {
    check_aligned(surface.timestamps(), actual.timestamps())?;
    evaluate_values(surface, actual.values(), alphas, significance)
}

/// As [`evaluate_surface`], with actuals given row by row (the surface may
/// have gaps, e.g. after skipped backtest days).
pub fn evaluate_values(
    surface: &QuantileForecastSurface,
    actual: &[f64],
    alphas: &[f64],
    significance: f64,
) -> Result<(Vec<AlphaEvaluation>, f64), EvaluateError> {
    if actual.len() != surface.nrows() || actual.is_empty() {
        return Err(EvaluateError::Alignment(format!("{} forecasts for {} actuals", surface.nrows(), actual.len())));
    }
    let score = aps_per_level(surface, actual).iter().sum::<f64>() / surface.grid().len() as f64;
    let evals = alphas
        .iter()
        .map(|&alpha| {
            let i = build_interval(surface, alpha)?;
            let coverage = coverage_values(&i.lower, &i.upper, actual);
            let kupiec = kupiec_test(&coverage.hits, alpha, significance)?;
            let christoffersen = christoffersen_test(&coverage.hits, alpha, significance)?;
            Ok(AlphaEvaluation { alpha, coverage, kupiec, christoffersen })
        })
        .collect::<Result<Vec<_>, EvaluateError>>()?;
    Ok((evals, score))
}

pub fn write_metrics_csv<W: Write>(out: W, rows: &[MetricsRow]) -> Result<(), EvaluateError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aps_csv<W: Write>(out: W, rows: &[ApsRow]) -> Result<(), EvaluateError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
