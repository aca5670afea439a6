//! Rolling-window probabilistic backtests: fit a variant on the trailing
//! `window_days` of point forecasts, predict the next day, slide by one day.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use chrono::NaiveDate;
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{repair_crossing, HourlyTimeSeries, PointForecastMatrix, QuantileForecastSurface, QuantileGrid};
use crate::evaluate::{
    evaluate_values, write_aps_csv, write_metrics_csv, AlphaEvaluation, ApsRow, EvaluateError,
    MetricsRow,
};
use crate::par::{map_indexed, Execution};
use crate::tables::{write_surface_csv, TableError};
use crate::variants::{fit_variant_matrix, predict_matrix, VariantError, VariantSpec};

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("insufficient coverage: {0}")]
    Coverage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("fit failed for {day}: {source}")]
    Fit { day: NaiveDate, source: VariantError },
    #[error("prediction spans differ between configurations: {0}")]
    SpanMismatch(String),
    #[error("no prediction day could be fitted")]
    NothingFitted,
    #[error(transparent)]
    Evaluate(#[from] EvaluateError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FailurePolicy {
    #[default]
    Abort,
    /// Leave the day out of the surface and record it in the provenance.
    SkipAndLog,
}

fn default_alphas() -> Vec<f64> {
    vec![50.0, 70.0, 90.0]
}

fn default_significance() -> f64 {
    0.05
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub window_days: usize,
    pub variant: VariantSpec,
    #[serde(default)]
    pub grid: QuantileGrid,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_true")]
    pub crossing_repair: bool,
    #[serde(default = "default_significance")]
    pub significance: f64,
    #[serde(default)]
    pub on_failure: FailurePolicy,
    /// First prediction day index; defaults to `window_days`.
    #[serde(default)]
    pub first_prediction_day: Option<usize>,
    /// Cap on the number of prediction days.
    #[serde(default)]
    pub prediction_days: Option<usize>,
}

impl BacktestConfig {
    pub fn new(window_days: usize, variant: VariantSpec) -> Self {
        Self {
            window_days,
            variant,
            grid: QuantileGrid::percentiles(),
            alphas: default_alphas(),
            crossing_repair: true,
            significance: default_significance(),
            on_failure: FailurePolicy::Abort,
            first_prediction_day: None,
            prediction_days: None,
        }
    }

    pub fn validate(&self) -> Result<(), BacktestError> {
        if self.window_days < 2 {
            return Err(BacktestError::Config("calibration window must span at least 2 days".into()));
        }
        if self.alphas.is_empty() {
            return Err(BacktestError::Config("no interval widths requested".into()));
        }
        for &a in &self.alphas {
            if !(a > 0.0 && a < 100.0) {
                return Err(BacktestError::Config(format!("alpha {a} outside (0, 100)")));
            }
            for k in [(100.0 - a) / 200.0, (100.0 + a) / 200.0] {
                if self.grid.position(k).is_none() {
                    return Err(BacktestError::Evaluate(EvaluateError::MissingLevel { alpha: a, level: k }));
                }
            }
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(BacktestError::Config("significance must lie in (0, 1)".into()));
        }
        if matches!(self.prediction_days, Some(0)) {
            return Err(BacktestError::Config("prediction_days must be positive".into()));
        }
        Ok(())
    }

    /// Prediction day indices for a panel of `days` days.
    pub fn prediction_span(&self, days: usize) -> Result<std::ops::Range<usize>, BacktestError> {
        let first = self.first_prediction_day.unwrap_or(self.window_days);
        if first < self.window_days {
            return Err(BacktestError::Config(format!(
                "first prediction day {first} leaves less than {} days of history",
                self.window_days
            )));
        }
        if first >= days {
            return Err(BacktestError::Coverage(format!(
                "{days} days of data cannot cover a {}-day window plus one prediction day",
                self.window_days
            )));
        }
        let last = self.prediction_days.map_or(days, |n| (first + n).min(days));
        Ok(first..last)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedDay {
    pub day: NaiveDate,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: BacktestConfig,
    /// SHA-256 of the point-forecast matrix (timestamps, names, values).
    pub forecasts_digest: String,
    /// SHA-256 of the actual prices.
    pub actuals_digest: String,
    pub first_day: NaiveDate,
    pub last_day: NaiveDate,
    pub fitted_models: usize,
    pub skipped: Vec<SkippedDay>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub label: String,
    pub evaluations: Vec<AlphaEvaluation>,
    pub aps: f64,
    pub surface: QuantileForecastSurface,
    pub provenance: Provenance,
}

impl BacktestReport {
    pub fn metrics_rows(&self) -> Vec<MetricsRow> {
        self.evaluations.iter().map(|e| e.row(&self.label)).collect()
    }
}

pub fn digest_forecasts(x: &PointForecastMatrix) -> String {
    let mut h = Sha256::new();
    for t in x.timestamps() {
        h.update(t.utc().timestamp().to_le_bytes());
    }
    for name in x.names() {
        h.update(name.as_bytes());
        h.update([0]);
    }
    for v in x.values().iter() {
        h.update(v.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn digest_series(y: &HourlyTimeSeries) -> String {
    let mut h = Sha256::new();
    for (t, v) in y.timestamps().iter().zip(y.values()) {
        h.update(t.utc().timestamp().to_le_bytes());
        h.update(v.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn check_inputs(x: &PointForecastMatrix, y: &HourlyTimeSeries) -> Result<(), BacktestError> {
    if x.timestamps() != y.timestamps() {
        return Err(BacktestError::Coverage("point forecasts and actuals are not aligned".into()));
    }
    Ok(())
}

/// Quantile forecasts for prediction day index `d`, using only rows of days
/// `d - window_days .. d`.
pub fn forecast_day(
    x: &PointForecastMatrix,
    y: &HourlyTimeSeries,
    cfg: &BacktestConfig,
    d: usize,
) -> Result<QuantileForecastSurface, VariantError> {
    let (start, end) = ((d - cfg.window_days) * 24, d * 24);
    let train = x.values().rows(start, end - start).into_owned();
    let fv = fit_variant_matrix(&cfg.variant, &train, &y.values()[start..end], &cfg.grid, Execution::Sequential)?;
    let next = x.rows(end, end + 24);
    let values = predict_matrix(&fv, next.values())?;
    let s = QuantileForecastSurface::new(next.timestamps().to_vec(), cfg.grid.clone(), values)?;
    Ok(if cfg.crossing_repair { repair_crossing(&s) } else { s })
}

pub fn run_backtest(
    x: &PointForecastMatrix,
    y: &HourlyTimeSeries,
    cfg: &BacktestConfig,
    exec: Execution,
) -> Result<BacktestReport, BacktestError> {
    cfg.validate()?;
    cfg.variant.validate(x.ncols()).map_err(|e| BacktestError::Config(e.to_string()))?;
    check_inputs(x, y)?;
    let span = cfg.prediction_span(y.num_days())?;
    let days: Vec<usize> = span.collect();
    let results = map_indexed(days.len(), exec, |i| forecast_day(x, y, cfg, days[i]));

    let mut parts = Vec::with_capacity(days.len());
    let mut skipped = Vec::new();
    let mut rows = Vec::new();
    for (&d, r) in days.iter().zip(results) {
        let day = y.timestamps()[d * 24].day();
        match r {
            Ok(s) => {
                parts.push(s);
                rows.push(d);
            }
            Err(e) => match cfg.on_failure {
                FailurePolicy::Abort => return Err(BacktestError::Fit { day, source: e }),
                FailurePolicy::SkipAndLog => skipped.push(SkippedDay { day, reason: e.to_string() }),
            },
        }
    }
    if parts.is_empty() {
        return Err(BacktestError::NothingFitted);
    }
    let surface = QuantileForecastSurface::concat(&parts).map_err(|e| BacktestError::Config(e.to_string()))?;
    let actual: Vec<f64> = rows.iter().flat_map(|&d| y.day_values(d).iter().copied()).collect();
    let (evaluations, aps) = evaluate_values(&surface, &actual, &cfg.alphas, cfg.significance)?;
    let provenance = Provenance {
        config: cfg.clone(),
        forecasts_digest: digest_forecasts(x),
        actuals_digest: digest_series(y),
        first_day: y.timestamps()[days[0] * 24].day(),
        last_day: y.timestamps()[days[days.len() - 1] * 24].day(),
        fitted_models: parts.len(),
        skipped,
    };
    Ok(BacktestReport { label: cfg.variant.name.to_string(), evaluations, aps, surface, provenance })
}

/// One report per configuration; all must predict the same span.
pub fn compare_variants(
    x: &PointForecastMatrix,
    y: &HourlyTimeSeries,
    cfgs: &[BacktestConfig],
    exec: Execution,
) -> Result<Vec<BacktestReport>, BacktestError> {
    let mut spans = Vec::new();
    for c in cfgs {
        c.validate()?;
        spans.push(c.prediction_span(y.num_days())?);
    }
    if let Some(first) = spans.first() {
        if let Some((i, s)) = spans.iter().enumerate().find(|(_, s)| *s != first) {
            return Err(BacktestError::SpanMismatch(format!(
                "configuration {i} predicts days {s:?}, configuration 0 predicts {first:?}"
            )));
        }
    }
    let reports = cfgs.iter().map(|c| run_backtest(x, y, c, exec)).collect::<Result<Vec<_>, _>>()?;
    if let Some(first) = reports.first() {
        for r in &reports[1..] {
            if r.surface.timestamps() != first.surface.timestamps() {
                return Err(BacktestError::SpanMismatch(format!(
                    "{} skipped days that {} predicted",
                    r.label, first.label
                )));
            }
        }
    }
    Ok(reports)
}

/// Unique, file-name-safe labels (`QRA`, `QRA_2`, ...).
fn bundle_labels(reports: &[BacktestReport]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in reports {
        let mut label = r.label.clone();
        let mut k = 2;
        while out.contains(&label) {
            label = format!("{}_{k}", r.label);
            k += 1;
        }
        out.push(label);
    }
    out
}

#[derive(Serialize)]
struct ConfigEcho<'a> {
    label: &'a str,
    provenance: &'a Provenance,
}

/// Write `metrics.csv`, `aps.csv`, one `surface_<label>.csv` per report and
/// `provenance.json`. Output depends only on the reports.
pub fn write_bundle(dir: &Path, reports: &[BacktestReport], tz: Tz) -> Result<(), BacktestError> {
    fs::create_dir_all(dir)?;
    let labels = bundle_labels(reports);
    let mut metrics = Vec::new();
    let mut aps = Vec::new();
    for (r, label) in reports.iter().zip(&labels) {
        metrics.extend(r.evaluations.iter().map(|e| e.row(label)));
        aps.push(ApsRow { variant: label.clone(), aps: r.aps });
        let f = BufWriter::new(fs::File::create(dir.join(format!("surface_{label}.csv")))?);
        write_surface_csv(f, &r.surface, tz)?;
    }
    write_metrics_csv(BufWriter::new(fs::File::create(dir.join("metrics.csv"))?), &metrics)?;
    write_aps_csv(BufWriter::new(fs::File::create(dir.join("aps.csv"))?), &aps)?;
    let echo: Vec<ConfigEcho> =
        reports.iter().zip(&labels).map(|(r, l)| ConfigEcho { label: l, provenance: &r.provenance }).collect();
    let json = serde_json::to_string_pretty(&echo).expect("provenance serialises");
    fs::write(dir.join("provenance.json"), json + "\n")?;
    Ok(())
}

