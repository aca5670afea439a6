use serde::{Deserialize, Serialize};

use super::PointModelError;
use crate::domain::{HourlyTimeSeries, PointForecastMatrix};

/// Point accuracy over `24 * N_d` hourly errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMetricsReport {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    /// Mean of `|e| / |actual|` as a ratio; `None` when an actual is zero.
    pub mape: Option<f64>,
    /// Out-of-sample `1 - SSE/SST` around the actual mean; `None` when the
    /// actuals are constant and the forecast is not exact.
    pub r2: Option<f64>,
    pub n: usize,
    pub window_days: Option<usize>,
}

/// Metrics from aligned value slices.
pub fn point_metrics_values(actual: &[f64], predicted: &[f64]) -> Result<PointMetricsReport, PointModelError> {
    if actual.len() != predicted.len() || actual.is_empty() {
        return Err(PointModelError::Alignment(format!("{} actuals vs {} predictions", actual.len(), predicted.len())));
    }
    let n = actual.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut ape = 0.0;
    let mut zero_actual = false;
    for (a, p) in actual.iter().zip(predicted) {
        let e = a - p;
        abs += e.abs();
        sq += e * e;
        if *a == 0.0 {
            zero_actual = true;
        } else {
            ape += e.abs() / a.abs();
        }
    }
    let mean = actual.iter().sum::<f64>() / n;
    let sst: f64 = actual.iter().map(|a| (a - mean).powi(2)).sum();
    let r2 = if sst > 0.0 {
        Some(1.0 - sq / sst)
    } else if sq == 0.0 {
        Some(1.0)
    } else {
        None
    };
    let mse = sq / n;
    Ok(PointMetricsReport {
        mae: abs / n,
        mse,
        rmse: mse.sqrt(),
        mape: (!zero_actual).then(|| ape / n),
        r2,
        n: actual.len(),
        window_days: None,
    })
}

/// Metrics of `predicted` against `actual`; both must share one index.
pub fn point_metrics(actual: &HourlyTimeSeries, predicted: &HourlyTimeSeries) -> Result<PointMetricsReport, PointModelError> {
    if actual.timestamps() != predicted.timestamps() {
        return Err(PointModelError::Alignment("timestamps differ".into()));
    }
    point_metrics_values(actual.values(), predicted.values())
}

/// Metrics for every column of a forecast matrix against the matching
/// actuals (looked up by timestamp).
pub fn point_metrics_matrix(
    actual: &HourlyTimeSeries,
    forecasts: &PointForecastMatrix,
) -> Result<Vec<(String, PointMetricsReport)>, PointModelError> {
    let first = forecasts.timestamps()[0];
    let start = actual
        .timestamps()
        .iter()
        .position(|t| *t == first)
        .ok_or_else(|| PointModelError::Alignment("forecast start not in actual series".into()))?;
    let end = start + forecasts.nrows();
    if end > actual.len() || actual.timestamps()[start..end] != *forecasts.timestamps() {
        return Err(PointModelError::Alignment("forecast index not contained in actual series".into()));
    }
    let a = &actual.values()[start..end];
    forecasts
        .names()
        .iter()
        .enumerate()
        .map(|(j, name)| Ok((name.clone(), point_metrics_values(a, &forecasts.column(j))?)))
        .collect()
}
