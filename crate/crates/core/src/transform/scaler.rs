use serde::{Deserialize, Serialize};

use super::TransformError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalerKind {
    /// Mean and sample standard deviation.
    MeanStd,
    /// Median and mean absolute deviation around the median.
    MedianMad,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub kind: ScalerKind,
    pub center: f64,
    pub spread: f64,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn fit_scaler(values: &[f64], kind: ScalerKind) -> Result<ScalerState, TransformError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(TransformError::NonFinite);
    }
    if values.len() < 2 {
        return Err(TransformError::Scale("at least two values required".into()));
    }
    let (center, spread) = match kind {
        ScalerKind::MeanStd => {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (mean, var.sqrt())
        }
        ScalerKind::MedianMad => {
            let med = median(values);
            let mad = values.iter().map(|v| (v - med).abs()).sum::<f64>() / values.len() as f64;
            (med, mad)
        }
    };
    if !(spread > 0.0) {
        return Err(TransformError::Scale("constant input has zero spread".into()));
    }
    Ok(ScalerState { kind, center, spread })
}

impl ScalerState {
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.center) / self.spread
    }

    #[inline]
    pub fn invert(&self, p: f64) -> f64 {
        p * self.spread + self.center
    }
}

pub fn apply_scaler(state: &ScalerState, values: &[f64]) -> Vec<f64> {
    values.iter().map(|&v| state.apply(v)).collect()
}

pub fn invert_scaler(state: &ScalerState, values: &[f64]) -> Vec<f64> {
    values.iter().map(|&v| state.invert(v)).collect()
}
