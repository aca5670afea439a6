use serde::{Deserialize, Serialize};

use super::{fit_scaler, ScalerKind, ScalerState, TransformError, VstParams};

/// What to fit: an optional scaler followed by an optional VST.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PipelineSpec {
    pub scaler: Option<ScalerKind>,
    pub vst: Option<VstParams>,
}

impl PipelineSpec {
    pub fn new(scaler: Option<ScalerKind>, vst: Option<VstParams>) -> Self {
        Self { scaler, vst }
    }
}

/// Fitted scaler + VST; `forward` maps prices to model space and `inverse`
/// maps back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FittedPipeline {
    pub scaler: Option<ScalerState>,
    pub vst: Option<VstParams>,
}

pub fn fit_pipeline(spec: &PipelineSpec, data: &[f64]) -> Result<FittedPipeline, TransformError> {
    let scaler = spec.scaler.map(|k| fit_scaler(data, k)).transpose()?;
    let vst = match &spec.vst {
        None => None,
        Some(params) => {
            let mut params = params.clone();
            let scaled: Vec<f64> = match &scaler {
                Some(s) => data.iter().map(|&v| s.apply(v)).collect(),
                None => data.to_vec(),
            };
            params.fit(&scaled)?;
            Some(params)
        }
    };
    Ok(FittedPipeline { scaler, vst })
}

impl FittedPipeline {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn forward(&self, x: f64) -> Result<f64, TransformError> {
        if !x.is_finite() {
            return Err(TransformError::NonFinite);
        }
        let p = self.scaler.map_or(x, |s| s.apply(x));
        match &self.vst {
            Some(v) => v.transform(p),
            None => Ok(p),
        }
    }

    pub fn inverse(&self, y: f64) -> Result<f64, TransformError> {
        let p = match &self.vst {
            Some(v) => v.inverse(y)?,
            None => y,
        };
        Ok(self.scaler.map_or(p, |s| s.invert(p)))
    }

    pub fn forward_all(&self, xs: &[f64]) -> Result<Vec<f64>, TransformError> {
        xs.iter().map(|&x| self.forward(x)).collect()
    }

    pub fn inverse_all(&self, ys: &[f64]) -> Result<Vec<f64>, TransformError> {
        ys.iter().map(|&y| self.inverse(y)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("pipeline state serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, TransformError> {
        serde_json::from_str(s).map_err(|e| TransformError::State(e.to_string()))
    }
}
