//! Market data acquisition: CSV files and the ENTSO-E Transparency Platform,
//! normalised into gap-free hourly panels.
//!
//! Normalised series carry market-local wall-clock labels (24 per day after
//! DST repair) placed on the zone's standard-time clock; see
//! [`crate::domain::Timestamp`].

mod csvio;
mod dst;
mod entsoe;

pub use csvio::{load_csv, write_observations_csv, CsvOptions, TimeBasis};
pub use dst::{normalize_dst, to_market_local, trim_partial_days};
pub use entsoe::{
    parse_document, DocumentKind, EntsoeClient, EntsoeRequest, HttpResponse, MissingPointPolicy,
    RetryPolicy, Transport, ENTSOE_API_URL,
};
#[cfg(feature = "http")]
pub use entsoe::UreqTransport;

use chrono::NaiveDateTime;
use thiserror::Error;

use crate::domain::{DomainError, HourlyTimeSeries};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("bad request interval: {0}")]
    BadInterval(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("network failure: {0}")]
    Network(String),
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing timestamps: {}", format_labels(.missing))]
    Gap { missing: Vec<NaiveDateTime> },
    #[error("duplicate timestamp {0} that is not a DST repeat")]
    Duplicate(NaiveDateTime),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

fn format_labels(labels: &[NaiveDateTime]) -> String {
    let shown: Vec<String> = labels.iter().take(10).map(|l| l.to_string()).collect();
    if labels.len() > 10 {
        format!("{} ... ({} total)", shown.join(", "), labels.len())
    } else {
        shown.join(", ")
    }
}

impl From<std::io::Error> for IngestError {
    fn from(e: std::io::Error) -> Self {
        IngestError::Io(e.to_string())
    }
}

/// Day-ahead prices with an optional load forecast on the same index.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketPanel {
    pub price_da: HourlyTimeSeries,
    pub load_forecast: Option<HourlyTimeSeries>,
}

impl MarketPanel {
    /// Builds a panel, inner-joining the two series on whole market days.
    pub fn new(price_da: HourlyTimeSeries, load_forecast: Option<HourlyTimeSeries>) -> Result<Self, IngestError> {
        let Some(load) = load_forecast else {
            return Ok(Self { price_da, load_forecast: None });
        };
        if price_da.timestamps() == load.timestamps() {
            return Ok(Self { price_da, load_forecast: Some(load) });
        }
        let (Some(p0), Some(l0)) = (price_da.first_day(), load.first_day()) else {
            return Err(IngestError::Gap { missing: Vec::new() });
        };
        let start = p0.max(l0);
        let p_end = p0 + chrono::Duration::days(price_da.num_days() as i64);
        let l_end = l0 + chrono::Duration::days(load.num_days() as i64);
        let end = p_end.min(l_end);
        if start >= end {
            return Err(IngestError::InvalidRequest("price and load series do not overlap".into()));
        }
        let days = (end - start).num_days() as usize;
        let pi = price_da.day_index(start).expect("start inside price span");
        let li = load.day_index(start).expect("start inside load span");
        let price = price_da.slice_days(pi, pi + days);
        let load = load.slice_days(li, li + days);
        if price.timestamps() != load.timestamps() {
            return Err(IngestError::InvalidRequest("price and load use different clocks".into()));
        }
        Ok(Self { price_da: price, load_forecast: Some(load) })
    }

    pub fn num_days(&self) -> usize {
        self.price_da.num_days()
    }
}
