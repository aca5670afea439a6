use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, TimeZone, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use super::dst::{normalize_dst, to_market_local, trim_partial_days};
use super::{IngestError, MarketPanel};

/// How the `datetime` column is to be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TimeBasis {
    /// Instants in UTC; offsets, when present, are honoured.
    #[default]
    Utc,
    /// Wall-clock labels in the market zone (DST repeats and gaps expected).
    MarketLocal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvOptions {
    pub tz: Tz,
    pub basis: TimeBasis,
    pub price_column: String,
    /// Load column, read when present in the header.
    pub load_column: String,
    /// Drop incomplete first and last market days instead of failing.
    pub trim_partial_days: bool,
}

impl CsvOptions {
    pub fn new(tz: Tz) -> Self {
        Self {
            tz,
            basis: TimeBasis::Utc,
            price_column: "price_da".into(),
            load_column: "quantity".into(),
            trim_partial_days: true,
        }
    }
}

enum Stamp {
    Instant(DateTime<Utc>),
    Naive(NaiveDateTime),
}

fn parse_stamp(s: &str) -> Option<Stamp> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(Stamp::Instant(t.with_timezone(&Utc)));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(Stamp::Naive(t));
        }
    }
    None
}

fn parse_value(field: Option<&str>, line: usize, column: &str) -> Result<f64, IngestError> {
    let raw = field.unwrap_or("");
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| IngestError::Parse { line, message: format!("column {column}: cannot parse {raw:?} as a number") })
}

/// Reads a panel from CSV with a `datetime` column and value columns, sorts
/// rows by time, repairs DST artefacts and validates the result.
pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<MarketPanel, IngestError> {
    let file = std::fs::File::open(path)?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| IngestError::Parse { line: 1, message: e.to_string() })?
        .clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let dt_col = find("datetime")
        .ok_or_else(|| IngestError::Parse { line: 1, message: "missing `datetime` column".into() })?;
    let price_col = find(&opts.price_column).ok_or_else(|| IngestError::Parse {
        line: 1,
        message: format!("missing `{}` column", opts.price_column),
    })?;
    let load_col = find(&opts.load_column);

    let mut price_local: Vec<(NaiveDateTime, f64)> = Vec::new();
    let mut load_local: Vec<(NaiveDateTime, f64)> = Vec::new();
    let mut seen_utc: BTreeMap<DateTime<Utc>, usize> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| IngestError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let raw = record.get(dt_col).unwrap_or("");
        let stamp = parse_stamp(raw)
            .ok_or_else(|| IngestError::Parse { line, message: format!("cannot parse datetime {raw:?}") })?;
        let label = match (opts.basis, stamp) {
            (TimeBasis::Utc, Stamp::Instant(t)) | (TimeBasis::MarketLocal, Stamp::Instant(t)) => {
                if let Some(prev) = seen_utc.insert(t, line) {
                    return Err(IngestError::Parse { line, message: format!("instant {t} repeats line {prev}") });
                }
                t.with_timezone(&opts.tz).naive_local()
            }
            (TimeBasis::Utc, Stamp::Naive(n)) => {
                let t = Utc.from_utc_datetime(&n);
                if let Some(prev) = seen_utc.insert(t, line) {
                    return Err(IngestError::Parse { line, message: format!("instant {t} repeats line {prev}") });
                }
                to_market_local(&[(t, 0.0)], opts.tz)[0].0
            }
            (TimeBasis::MarketLocal, Stamp::Naive(n)) => n,
        };
        price_local.push((label, parse_value(record.get(price_col), line, &opts.price_column)?));
        if let Some(c) = load_col {
            load_local.push((label, parse_value(record.get(c), line, &opts.load_column)?));
        }
    }

    let prep = |obs: Vec<(NaiveDateTime, f64)>| if opts.trim_partial_days { trim_partial_days(obs) } else { obs };
    let price = normalize_dst(&prep(price_local), opts.tz, "EUR/MWh")?;
    let load = if load_col.is_some() { Some(normalize_dst(&prep(load_local), opts.tz, "MWh")?) } else { None };
    MarketPanel::new(price, load)
}

/// Writes raw UTC observations as `datetime,price_da[,quantity]`, keeping
/// only instants present in both series when a load series is given.
pub fn write_observations_csv(
    path: &Path,
    price: &[(DateTime<Utc>, f64)],
    load: Option<&[(DateTime<Utc>, f64)]>,
) -> Result<(), IngestError> {
    let load_map: Option<BTreeMap<DateTime<Utc>, f64>> = load.map(|l| l.iter().copied().collect());
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    match load_map {
        Some(_) => writeln!(out, "datetime,price_da,quantity")?,
        None => writeln!(out, "datetime,price_da")?,
    }
    let mut rows: Vec<_> = price.to_vec();
    rows.sort_by_key(|r| r.0);
    for (t, p) in rows {
        let stamp = t.format("%Y-%m-%dT%H:%M:%SZ");
        match &load_map {
            Some(m) => {
                if let Some(q) = m.get(&t) {
                    writeln!(out, "{stamp},{p},{q}")?;
                }
            }
            None => writeln!(out, "{stamp},{p}")?,
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn datetime_formats() {
        assert!(matches!(parse_stamp("2015-01-05T00:00:00Z"), Some(Stamp::Instant(_))));
        assert!(matches!(parse_stamp("2015-01-05T01:00:00+01:00"), Some(Stamp::Instant(_))));
        assert!(matches!(parse_stamp("2015-01-05 00:00:00"), Some(Stamp::Naive(_))));
        assert!(parse_stamp("05/01/2015").is_none());
    }
}
