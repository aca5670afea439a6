//! Scaling and variance stabilising transformations.

mod pipeline;
mod scaler;
mod vst;

pub use pipeline::{fit_pipeline, FittedPipeline, PipelineSpec};
pub use scaler::{apply_scaler, fit_scaler, invert_scaler, ScalerKind, ScalerState};
pub use vst::{vst_inverse, vst_transform, EmpiricalCdf, Formula, PitReference, VstKind, VstParams};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransformError {
    #[error("non-finite input")]
    NonFinite,
    #[error("cannot scale: {0}")]
    Scale(String),
    #[error("outside the domain: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("transformation has not been fitted")]
    NotFitted,
    #[error("malformed pipeline state: {0}")]
    State(String),
}
