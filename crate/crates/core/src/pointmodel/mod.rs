//! Rolling-window point forecasts from lagged prices, refitted every day.

mod metrics;
mod ols;

pub use metrics::{point_metrics, point_metrics_matrix, point_metrics_values, PointMetricsReport};
pub use ols::{fit_least_squares_min_norm, fit_ols};

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{DomainError, PointForecastMatrix, Timestamp};
use crate::ingest::MarketPanel;
use crate::par::{map_indexed, Execution};
use crate::transform::{fit_pipeline, fit_scaler, FittedPipeline, PipelineSpec, ScalerKind, ScalerState, TransformError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PointModelError {
    #[error("insufficient history: {0}")]
    Coverage(String),
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("misaligned inputs: {0}")]
    Alignment(String),
    #[error("shape: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("transform failed on {day}: {source}")]
    Transform { day: NaiveDate, source: TransformError },
    #[error("fit failed on {day}: {source}")]
    Fit { day: NaiveDate, source: Box<PointModelError> },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Exogenous regressors taken from the panel for the target day itself
/// (known ex ante, e.g. the day-ahead load forecast).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exogenous {
    LoadForecast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    /// Day lags of the same hour's price.
    pub lags: Vec<usize>,
    #[serde(default)]
    pub exogenous: Vec<Exogenous>,
    pub include_intercept: bool,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self { lags: vec![1, 2, 7], exogenous: vec![Exogenous::LoadForecast], include_intercept: true }
    }
}

impl FeatureSpec {
    pub fn prices_only(lags: Vec<usize>) -> Self {
        Self { lags, exogenous: Vec::new(), include_intercept: true }
    }

    pub fn max_lag(&self) -> usize {
        self.lags.iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), PointModelError> {
        if self.lags.is_empty() || self.lags.contains(&0) {
            return Err(PointModelError::Config("lags must be non-empty and >= 1".into()));
        }
        Ok(())
    }

    fn width(&self) -> usize {
        usize::from(self.include_intercept) + self.lags.len() + self.exogenous.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PointModelKind {
    /// Least squares on the features (in transformed space).
    #[default]
    Ols,
    /// `P_{d-1,h}`: the lag-1 price with coefficient 1, nothing fitted.
    Persistence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointModelConfig {
    pub label: String,
    #[serde(default)]
    pub kind: PointModelKind,
    #[serde(default)]
    pub features: FeatureSpec,
    /// Scaler + VST applied to prices; the load forecast gets a mean/std
    /// scaler of its own.
    #[serde(default)]
    pub transform: PipelineSpec,
    /// One regression per hour (default) or one pooled over all hours.
    #[serde(default = "default_true")]
    pub per_hour: bool,
}

fn default_true() -> bool {
    true
}

impl PointModelConfig {
    pub fn ols(label: impl Into<String>, features: FeatureSpec) -> Self {
        Self { label: label.into(), kind: PointModelKind::Ols, features, transform: PipelineSpec::default(), per_hour: true }
    }

    pub fn persistence() -> Self {
        Self {
            label: "naive".into(),
            kind: PointModelKind::Persistence,
            features: FeatureSpec { lags: vec![1], exogenous: Vec::new(), include_intercept: false },
            transform: PipelineSpec::default(),
            per_hour: true,
        }
    }

    pub fn with_transform(mut self, transform: PipelineSpec) -> Self {
        self.transform = transform;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationSchedule {
    pub window_days: usize,
    pub first_prediction_day: NaiveDate,
    /// Inclusive.
    pub last_prediction_day: NaiveDate,
}

impl CalibrationSchedule {
    pub fn num_days(&self) -> usize {
        ((self.last_prediction_day - self.first_prediction_day).num_days() + 1).max(0) as usize
    }
}

/// Index range `[first, last]` of prediction days within the panel, after
/// checking that `window_days + max_lag` days of history precede them.
fn prediction_range(
    panel: &MarketPanel,
    sched: &CalibrationSchedule,
    max_lag: usize,
) -> Result<(usize, usize), PointModelError> {
    if sched.last_prediction_day < sched.first_prediction_day {
        return Err(PointModelError::Config("empty prediction span".into()));
    }
    if sched.window_days < max_lag + 1 {
        return Err(PointModelError::Config(format!("window {} shorter than max lag + 1", sched.window_days)));
    }
    let first = panel.price_da.day_index(sched.first_prediction_day).ok_or_else(|| {
        PointModelError::Coverage(format!("{} outside the panel", sched.first_prediction_day))
    })?;
    let last = panel
        .price_da
        .day_index(sched.last_prediction_day)
        .ok_or_else(|| PointModelError::Coverage(format!("{} outside the panel", sched.last_prediction_day)))?;
    let need = sched.window_days + max_lag;
    if first < need {
        return Err(PointModelError::Coverage(format!(
            "first prediction day needs {need} days of history, panel has {first}"
        )));
    }
    Ok((first, last))
}

/// Transformed features for one calibration: prices through the fitted
/// pipeline, load through its own scaler.
struct Features<'a> {
    spec: &'a FeatureSpec,
    pipe: FittedPipeline,
    y_t: Vec<f64>,
    lo: usize,
    load: Option<(ScalerState, &'a [f64])>,
}

impl Features<'_> {
    fn price(&self, day_idx: usize, h: usize) -> f64 {
        self.y_t[day_idx * 24 + h - self.lo]
    }

    fn row(&self, t: usize, h: usize, out: &mut Vec<f64>) {
        if self.spec.include_intercept {
            out.push(1.0);
        }
        for &l in &self.spec.lags {
            out.push(self.price(t - l, h));
        }
        if let Some((sc, vals)) = &self.load {
            out.push(sc.apply(vals[t * 24 + h]));
        }
    }
}

struct Calibration<'a> {
    features: Features<'a>,
    /// 24 per-hour coefficient vectors, or a single pooled one.
    betas: Vec<DVector<f64>>,
}

fn calibrate<'a>(
    panel: &'a MarketPanel,
    cfg: &'a PointModelConfig,
    window: usize,
    d: usize,
) -> Result<Calibration<'a>, PointModelError> {
    let day = panel.price_da.timestamps()[d * 24].day();
    let prices = panel.price_da.values();
    let f = &cfg.features;
    let w0 = d - window;
    let terr = |source| PointModelError::Transform { day, source };

    // Pipeline fitted on the window's target prices only.
    let pipe = fit_pipeline(&cfg.transform, &prices[w0 * 24..d * 24]).map_err(terr)?;
    let lo = (w0 - f.max_lag()) * 24;
    let y_t = pipe.forward_all(&prices[lo..d * 24]).map_err(terr)?;
    let load = if f.exogenous.is_empty() {
        None
    } else {
        let series = panel
            .load_forecast
            .as_ref()
            .ok_or_else(|| PointModelError::Config("load forecast requested but panel has none".into()))?;
        let vals = series.values();
        let sc = fit_scaler(&vals[w0 * 24..d * 24], ScalerKind::MeanStd).map_err(terr)?;
        Some((sc, vals))
    };
    let features = Features { spec: f, pipe, y_t, lo, load };

    let p = f.width();
    let fit = |hours: &[usize]| -> Result<DVector<f64>, PointModelError> {
        let n = window * hours.len();
        let mut data = Vec::with_capacity(n * p);
        let mut ys = Vec::with_capacity(n);
        for t in w0..d {
            for &h in hours {
                features.row(t, h, &mut data);
                ys.push(features.price(t, h));
            }
        }
        let x = DMatrix::from_row_slice(n, p, &data);
        let y = DVector::from_vec(ys);
        // Collinear windows (e.g. flat prices) fall back to the minimum-norm fit.
        match fit_ols(&x, &y) {
            Err(PointModelError::RankDeficient) => fit_least_squares_min_norm(&x, &y),
            other => other,
        }
        .map_err(|e| PointModelError::Fit { day, source: Box::new(e) })
    };
    let betas = if cfg.per_hour {
        (0..24).map(|h| fit(&[h])).collect::<Result<Vec<_>, _>>()?
    } else {
        vec![fit(&(0..24).collect::<Vec<_>>())?]
    };
    Ok(Calibration { features, betas })
}

/// Forecast of all 24 hours of panel day `d` from the `window` days before it.
fn forecast_day(
    panel: &MarketPanel,
    cfg: &PointModelConfig,
    window: usize,
    d: usize,
) -> Result<[f64; 24], PointModelError> {
    let mut out = [0.0; 24];
    if cfg.kind == PointModelKind::Persistence {
        out.copy_from_slice(&panel.price_da.values()[(d - 1) * 24..d * 24]);
        return Ok(out);
    }
    let day = panel.price_da.timestamps()[d * 24].day();
    let cal = calibrate(panel, cfg, window, d)?;
    let mut x = Vec::with_capacity(cfg.features.width());
    for (h, slot) in out.iter_mut().enumerate() {
        x.clear();
        cal.features.row(d, h, &mut x);
        let beta = &cal.betas[if cfg.per_hour { h } else { 0 }];
        let yhat: f64 = x.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
        *slot = cal.features.pipe.inverse(yhat).map_err(|source| PointModelError::Transform { day, source })?;
    }
    Ok(out)
}

/// Coefficients fitted for prediction day `day` (24 per-hour vectors, or one
/// pooled vector), in transformed space and in feature order: intercept,
/// lags, exogenous.
pub fn calibration_coefficients(
    panel: &MarketPanel,
    cfg: &PointModelConfig,
    window: usize,
    day: NaiveDate,
) -> Result<Vec<Vec<f64>>, PointModelError> {
    cfg.features.validate()?;
    let sched = CalibrationSchedule { window_days: window, first_prediction_day: day, last_prediction_day: day };
    let (d, _) = prediction_range(panel, &sched, cfg.features.max_lag())?;
    if cfg.kind == PointModelKind::Persistence {
        return Ok(vec![vec![1.0]]);
    }
    let cal = calibrate(panel, cfg, window, d)?;
    Ok(cal.betas.iter().map(|b| b.iter().copied().collect()).collect())
}

/// Rolling daily forecasts for one configuration and window length.
pub fn rolling_point_forecast(
    panel: &MarketPanel,
    cfg: &PointModelConfig,
    sched: &CalibrationSchedule,
    exec: Execution,
) -> Result<PointForecastMatrix, PointModelError> {
    rolling_point_forecasts(
        panel,
        std::slice::from_ref(cfg),
        &[sched.window_days],
        sched.first_prediction_day,
        sched.last_prediction_day,
        exec,
    )
}

/// Column label for a configuration and window, e.g. `ols_w182`.
pub fn column_label(cfg: &PointModelConfig, window: usize) -> String {
    format!("{}_w{window}", cfg.label)
}

/// One column per `(configuration, window)` pair, days in parallel.
pub fn rolling_point_forecasts(
    panel: &MarketPanel,
    configs: &[PointModelConfig],
    windows: &[usize],
    first_prediction_day: NaiveDate,
    last_prediction_day: NaiveDate,
    exec: Execution,
) -> Result<PointForecastMatrix, PointModelError> {
    if configs.is_empty() || windows.is_empty() {
        return Err(PointModelError::Config("no configurations or windows".into()));
    }
    let mut combos = Vec::new();
    let mut range = None;
    for cfg in configs {
        cfg.features.validate()?;
        for &w in windows {
            let sched = CalibrationSchedule { window_days: w, first_prediction_day, last_prediction_day };
            let r = prediction_range(panel, &sched, cfg.features.max_lag())?;
            range = Some(r);
            combos.push((cfg, w));
        }
    }
    let (first, last) = range.expect("at least one combination");
    let ndays = last - first + 1;
    let per_day = map_indexed(ndays, exec, |i| {
        combos.iter().map(|(cfg, w)| forecast_day(panel, cfg, *w, first + i)).collect::<Result<Vec<_>, _>>()
    });
    let m = combos.len();
    let mut values = DMatrix::zeros(ndays * 24, m);
    for (i, day) in per_day.into_iter().enumerate() {
        for (j, hours) in day?.into_iter().enumerate() {
            for (h, v) in hours.iter().enumerate() {
                values[(i * 24 + h, j)] = *v;
            }
        }
    }
    let timestamps: Vec<Timestamp> = panel.price_da.timestamps()[first * 24..(last + 1) * 24].to_vec();
    let names = combos.iter().map(|(cfg, w)| column_label(cfg, *w)).collect();
    Ok(PointForecastMatrix::new(timestamps, names, values)?)
}
