//! Foundational domain types shared by every module: hourly timestamps and
//! series, quantile levels and grids, point-forecast matrices and quantile
//! forecast surfaces, plus the pinball loss.

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, TimeZone, Timelike, Utc};
use chrono_tz::{OffsetComponents, Tz};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("market hour {0} outside 0..=23")]
    InvalidHour(u32),
    #[error("quantile level {0} outside the open interval (0, 1)")]
    InvalidLevel(f64),
    #[error("quantile grid must be non-empty and strictly increasing")]
    UnorderedGrid,
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("timestamps not strictly increasing at position {0}")]
    Unordered(usize),
    #[error("series has a gap after position {0}")]
    Gap(usize),
    #[error("series must cover whole market days (got {0} entries)")]
    PartialDay(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// An hourly instant together with its market-local day and hour labels.
///
/// After DST normalization a series lives on the market's standard-time
/// clock: `utc` is the wall-clock label shifted by the zone's standard
/// (non-DST) offset, so consecutive hours are always exactly one hour apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Timestamp {
    utc: DateTime<Utc>,
    day: NaiveDate,
    hour: u8,
}

impl Timestamp {
    pub fn new(utc: DateTime<Utc>, day: NaiveDate, hour: u32) -> Result<Self, DomainError> {
        if hour > 23 {
            return Err(DomainError::InvalidHour(hour));
        }
        Ok(Self { utc, day, hour: hour as u8 })
    }

    /// Timestamp for market day `day`, hour `hour` in zone `tz`, placed on
    /// the zone's standard-time clock.
    pub fn from_market_local(day: NaiveDate, hour: u32, tz: Tz) -> Result<Self, DomainError> {
        if hour > 23 {
            return Err(DomainError::InvalidHour(hour));
        }
        let naive = day.and_hms_opt(hour, 0, 0).expect("valid hour");
        let utc = naive - standard_offset(tz, day);
        Ok(Self { utc: Utc.from_utc_datetime(&utc), day, hour: hour as u8 })
    }

    /// Inverse of [`Timestamp::from_market_local`]: recover the labels from
    /// a standard-clock instant.
    pub fn from_standard_instant(utc: DateTime<Utc>, tz: Tz) -> Self {
        let guess = (utc.naive_utc() + standard_offset(tz, utc.date_naive())).date();
        let local = utc.naive_utc() + standard_offset(tz, guess);
        Self { utc, day: local.date(), hour: local.hour() as u8 }
    }

    pub fn utc(&self) -> DateTime<Utc> {
        self.utc
    }

    pub fn day(&self) -> NaiveDate {
        self.day
    }

    pub fn hour(&self) -> u32 {
        self.hour as u32
    }

    /// Wall-clock label `day` + `hour` as a naive datetime.
    pub fn local_label(&self) -> NaiveDateTime {
        self.day.and_hms_opt(self.hour as u32, 0, 0).expect("valid hour")
    }

    /// RFC 3339 rendering with the standard offset, e.g. `2015-01-05T00:00:00+01:00`.
    pub fn to_rfc3339(&self, tz: Tz) -> String {
        let off = standard_offset(tz, self.day);
        let secs = off.num_seconds();
        let sign = if secs < 0 { '-' } else { '+' };
        let secs = secs.abs();
        format!(
            "{}{}{:02}:{:02}",
            self.local_label().format("%Y-%m-%dT%H:%M:%S"),
            sign,
            secs / 3600,
            (secs % 3600) / 60
        )
    }

    /// `n` consecutive hourly stamps starting at hour 0 of `first_day`.
    pub fn hourly_range(first_day: NaiveDate, n: usize, tz: Tz) -> Vec<Timestamp> {
        (0..n)
            .map(|i| {
                let day = first_day + Duration::days((i / 24) as i64);
                Timestamp::from_market_local(day, (i % 24) as u32, tz).expect("hour < 24")
            })
            .collect()
    }
}

/// The zone's standard (non-DST) UTC offset around `day`.
pub fn standard_offset(tz: Tz, day: NaiveDate) -> Duration {
    let probe = day.and_hms_opt(12, 0, 0).expect("noon");
    tz.offset_from_utc_datetime(&probe).base_utc_offset()
}

/// Timestamp-indexed hourly series covering whole market days without gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyTimeSeries {
    units: String,
    timestamps: Vec<Timestamp>,
    values: Vec<f64>,
}

impl HourlyTimeSeries {
    pub fn new(
        units: impl Into<String>,
        timestamps: Vec<Timestamp>,
        values: Vec<f64>,
    ) -> Result<Self, DomainError> {
        if timestamps.len() != values.len() {
            return Err(DomainError::Shape(format!(
                "{} timestamps vs {} values",
                timestamps.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DomainError::NonFinite(i));
        }
        if timestamps.len() % 24 != 0 {
            return Err(DomainError::PartialDay(timestamps.len()));
        }
        for (i, ts) in timestamps.iter().enumerate() {
            if ts.hour() as usize != i % 24 {
                return Err(DomainError::PartialDay(timestamps.len()));
            }
            if i > 0 {
                let prev = &timestamps[i - 1];
                if ts.utc() <= prev.utc() {
                    return Err(DomainError::Unordered(i));
                }
                if ts.utc() - prev.utc() != Duration::hours(1) {
                    return Err(DomainError::Gap(i - 1));
                }
            }
        }
        Ok(Self { units: units.into(), timestamps, values })
    }

    /// Convenience constructor for a series starting at hour 0 of `first_day`.
    pub fn from_values(
        units: impl Into<String>,
        first_day: NaiveDate,
        tz: Tz,
        values: Vec<f64>,
    ) -> Result<Self, DomainError> {
        let ts = Timestamp::hourly_range(first_day, values.len(), tz);
        Self::new(units, ts, values)
    }

    pub fn units(&self) -> &str {
        &self.units
    }

    pub fn timestamps(&self) -> &[Timestamp] {
        &self.timestamps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_days(&self) -> usize {
        self.values.len() / 24
    }

    pub fn first_day(&self) -> Option<NaiveDate> {
        self.timestamps.first().map(|t| t.day())
    }

    /// Index of market day `day` within the series.
    pub fn day_index(&self, day: NaiveDate) -> Option<usize> {
        let first = self.first_day()?;
        let idx = (day - first).num_days();
        (idx >= 0 && (idx as usize) < self.num_days()).then_some(idx as usize)
    }

    pub fn day_values(&self, day_index: usize) -> &[f64] {
        &self.values[day_index * 24..(day_index + 1) * 24]
    }

    /// Sub-series of whole days `[start_day, end_day)` by index.
    pub fn slice_days(&self, start_day: usize, end_day: usize) -> HourlyTimeSeries {
        let (a, b) = (start_day * 24, end_day * 24);
        HourlyTimeSeries {
            units: self.units.clone(),
            timestamps: self.timestamps[a..b].to_vec(),
            values: self.values[a..b].to_vec(),
        }
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self, DomainError> {
        Self::new(self.units.clone(), self.timestamps.clone(), values)
    }
}

/// A quantile level strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct QuantileLevel(f64);

impl QuantileLevel {
    pub fn new(k: f64) -> Result<Self, DomainError> {
        if k.is_finite() && k > 0.0 && k < 1.0 {
            Ok(Self(k))
        } else {
            Err(DomainError::InvalidLevel(k))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Column header used in surface files: `q05`, `q50`, `q02.5`.
    pub fn header(self) -> String {
        let pct = self.0 * 100.0;
        let rounded = pct.round();
        if (pct - rounded).abs() < 1e-9 {
            format!("q{:02}", rounded as i64)
        } else {
            let s = format!("{:.6}", pct);
            let s = s.trim_end_matches('0');
            if pct < 10.0 {
                format!("q0{s}")
            } else {
                format!("q{s}")
            }
        }
    }

    pub fn from_header(header: &str) -> Result<Self, DomainError> {
        let pct: f64 = header
            .strip_prefix('q')
            .and_then(|s| s.parse().ok())
            .ok_or(DomainError::InvalidLevel(f64::NAN))?;
        Self::new(pct / 100.0)
    }
}

impl TryFrom<f64> for QuantileLevel {
    type Error = DomainError;
    fn try_from(k: f64) -> Result<Self, Self::Error> {
        Self::new(k)
    }
}

impl From<QuantileLevel> for f64 {
    fn from(k: QuantileLevel) -> f64 {
        k.0
    }
}

/// Strictly increasing set of quantile levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<QuantileLevel>", into = "Vec<QuantileLevel>")]
pub struct QuantileGrid {
    levels: Vec<QuantileLevel>,
}

impl QuantileGrid {
    pub fn new(levels: Vec<QuantileLevel>) -> Result<Self, DomainError> {
        if levels.is_empty() || levels.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(DomainError::UnorderedGrid);
        }
        Ok(Self { levels })
    }

    pub fn from_values(values: &[f64]) -> Result<Self, DomainError> {
        let levels = values
            .iter()
            .map(|&k| QuantileLevel::new(k))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(levels)
    }

    /// The 99 percentiles 0.01, 0.02, ..., 0.99.
    pub fn percentiles() -> Self {
        let levels = (1..=99).map(|i| QuantileLevel(i as f64 / 100.0)).collect();
        Self { levels }
    }

    pub fn levels(&self) -> &[QuantileLevel] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Position of level `k` in the grid (matching within 1e-9).
    pub fn position(&self, k: f64) -> Option<usize> {
        self.levels.iter().position(|l| (l.0 - k).abs() < 1e-9)
    }
}

impl Default for QuantileGrid {
    fn default() -> Self {
        Self::percentiles()
    }
}

impl TryFrom<Vec<QuantileLevel>> for QuantileGrid {
    type Error = DomainError;
    fn try_from(levels: Vec<QuantileLevel>) -> Result<Self, Self::Error> {
        Self::new(levels)
    }
}

impl From<QuantileGrid> for Vec<QuantileLevel> {
    fn from(g: QuantileGrid) -> Self {
        g.levels
    }
}

fn check_index(timestamps: &[Timestamp]) -> Result<(), DomainError> {
    for i in 1..timestamps.len() {
        if timestamps[i].utc() <= timestamps[i - 1].utc() {
            return Err(DomainError::Unordered(i));
        }
    }
    Ok(())
}

fn check_finite(values: &DMatrix<f64>) -> Result<(), DomainError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(DomainError::NonFinite(i)),
        None => Ok(()),
    }
}

/// Matrix of point predictions: rows are timestamps, columns are forecasters.
#[derive(Debug, Clone, PartialEq)]
pub struct PointForecastMatrix {
    timestamps: Vec<Timestamp>,
    names: Vec<String>,
    values: DMatrix<f64>,
}

impl PointForecastMatrix {
    pub fn new(
        timestamps: Vec<Timestamp>,
        names: Vec<String>,
        values: DMatrix<f64>,
    ) -> Result<Self, DomainError> {
        let (n, m) = values.shape();
        if n == 0 || m == 0 {
            return Err(DomainError::Shape("point forecast matrix is empty".into()));
        }
        if timestamps.len() != n || names.len() != m {
            return Err(DomainError::Shape(format!(
                "{n}x{m} values with {} timestamps and {} names",
                timestamps.len(),
                names.len()
            )));
        }
        check_finite(&values)?;
        check_index(&timestamps)?;
        Ok(Self { timestamps, names, values })
    }

    /// Build from named columns sharing one index.
    pub fn from_columns(
        timestamps: Vec<Timestamp>,
        columns: Vec<(String, Vec<f64>)>,
    ) -> Result<Self, DomainError> {
        let n = timestamps.len();
        if columns.iter().any(|(_, c)| c.len() != n) {
            return Err(DomainError::Shape("column length mismatch".into()));
        }
        let m = columns.len();
        let values = DMatrix::from_fn(n, m, |i, j| columns[j].1[i]);
        let names = columns.into_iter().map(|(name, _)| name).collect();
        Self::new(timestamps, names, values)
    }

    pub fn timestamps(&self) -> &[Timestamp] {
        &self.timestamps
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Rows `[start, end)`.
    pub fn rows(&self, start: usize, end: usize) -> PointForecastMatrix {
        PointForecastMatrix {
            timestamps: self.timestamps[start..end].to_vec(),
            names: self.names.clone(),
            values: self.values.rows(start, end - start).into_owned(),
        }
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }
}

/// Per-timestamp predicted quantiles over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileForecastSurface {
    timestamps: Vec<Timestamp>,
    grid: QuantileGrid,
    values: DMatrix<f64>,
}

impl QuantileForecastSurface {
    pub fn new(
        timestamps: Vec<Timestamp>,
        grid: QuantileGrid,
        values: DMatrix<f64>,
    ) -> Result<Self, DomainError> {
        if values.nrows() != timestamps.len() || values.ncols() != grid.len() {
            return Err(DomainError::Shape(format!(
                "{}x{} surface for {} timestamps and {} levels",
                values.nrows(),
                values.ncols(),
                timestamps.len(),
                grid.len()
            )));
        }
        check_finite(&values)?;
        check_index(&timestamps)?;
        Ok(Self { timestamps, grid, values })
    }

    pub fn timestamps(&self) -> &[Timestamp] {
        &self.timestamps
    }

    pub fn grid(&self) -> &QuantileGrid {
        &self.grid
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }

    /// True when every row is non-decreasing across the grid.
    pub fn is_monotone(&self) -> bool {
        self.values
            .row_iter()
            .all(|row| row.iter().zip(row.iter().skip(1)).all(|(a, b)| a <= b))
    }

    /// Concatenate surfaces sharing one grid, in the given order.
    pub fn concat(parts: &[QuantileForecastSurface]) -> Result<Self, DomainError> {
        let first = parts
            .first()
            .ok_or_else(|| DomainError::Shape("no surfaces to concatenate".into()))?;
        let grid = first.grid.clone();
        if parts.iter().any(|p| p.grid != grid) {
            return Err(DomainError::Shape("grids differ".into()));
        }
        let n: usize = parts.iter().map(|p| p.nrows()).sum();
        let mut values = DMatrix::zeros(n, grid.len());
        let mut timestamps = Vec::with_capacity(n);
        let mut row = 0;
        for p in parts {
            values.rows_mut(row, p.nrows()).copy_from(&p.values);
            timestamps.extend_from_slice(&p.timestamps);
            row += p.nrows();
        }
        Self::new(timestamps, grid, values)
    }
}

/// Check (pinball) loss `rho_k(u) = u * (k - 1{u < 0})`.
#[inline]
pub fn pinball_loss(k: QuantileLevel, residual: f64) -> f64 {
    let k = k.value();
    if residual >= 0.0 {
        k * residual
    } else {
        (k - 1.0) * residual
    }
}

/// Monotone rearrangement: sort every row ascending.
pub fn repair_crossing(surface: &QuantileForecastSurface) -> QuantileForecastSurface {
    let mut values = surface.values.clone();
    let g = values.ncols();
    let mut buf = vec![0.0; g];
    for i in 0..values.nrows() {
        for j in 0..g {
            buf[j] = values[(i, j)];
        }
        buf.sort_by(f64::total_cmp);
        for j in 0..g {
            values[(i, j)] = buf[j];
        }
    }
    QuantileForecastSurface {
        timestamps: surface.timestamps.clone(),
        grid: surface.grid.clone(),
        values,
    }
}
