//! Quantile Regression Averaging (QRA) and its variants for probabilistic
//! electricity price forecasting.
//!
//! The crate covers the whole research loop: market data acquisition
//! ([`ingest`]), scaling and variance stabilising transformations
//! ([`transform`]), rolling point forecasts ([`pointmodel`]), the quantile
//! regression kernels ([`qrsolve`]), the nine QRA variants ([`variants`]),
//! probabilistic evaluation ([`evaluate`]) and rolling backtests
//! ([`backtest`]).

pub mod backtest;
pub mod domain;
pub mod evaluate;
pub mod ingest;
pub mod par;
pub mod pointmodel;
pub mod qrsolve;
pub mod stats;
pub mod synthetic;
pub mod tables;
pub mod transform;
pub mod variants;

pub use domain::{
    pinball_loss, repair_crossing, DomainError, HourlyTimeSeries, PointForecastMatrix,
    QuantileForecastSurface, QuantileGrid, QuantileLevel, Timestamp,
};
pub use par::Execution;
