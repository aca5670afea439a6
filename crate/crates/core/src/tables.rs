//! CSV files exchanged between commands: point-forecast matrices (with an
//! optional `actual` column) and quantile surfaces (`datetime,q01,...`).
//!
//! Datetimes are written as RFC 3339 on the standard-time clock of the
//! market zone, so they read back to identical [`Timestamp`]s.

use std::io::{Read, Write};

use chrono::{DateTime, Utc};
use chrono_tz::Tz;
use nalgebra::DMatrix;
use thiserror::Error;

use crate::domain::{
    DomainError, HourlyTimeSeries, PointForecastMatrix, QuantileForecastSurface, QuantileGrid, QuantileLevel,
    Timestamp,
};

#[derive(Debug, Error)]
pub enum TableError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub const ACTUAL_COLUMN: &str = "actual";

fn write_rows<W: Write>(
    out: W,
    header: Vec<String>,
    timestamps: &[Timestamp],
    tz: Tz,
    row: impl Fn(usize) -> Vec<f64>,
) -> Result<(), TableError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&header)?;
    for (i, t) in timestamps.iter().enumerate() {
        let mut rec = vec![t.to_rfc3339(tz)];
        rec.extend(row(i).into_iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

struct Parsed {
    header: Vec<String>,
    timestamps: Vec<Timestamp>,
    columns: Vec<Vec<f64>>,
}

fn read_rows<R: Read>(input: R, tz: Tz) -> Result<Parsed, TableError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.first().map(String::as_str) != Some("datetime") {
        return Err(TableError::Parse { line: 1, message: "first column must be `datetime`".into() });
    }
    let width = header.len() - 1;
    let mut timestamps = Vec::new();
    let mut columns = vec![Vec::new(); width];
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(TableError::Parse { line, message: format!("expected {} fields", header.len()) });
        }
        let utc = DateTime::parse_from_rfc3339(rec[0].trim())
            .map_err(|e| TableError::Parse { line, message: format!("datetime {:?}: {e}", &rec[0]) })?
            .with_timezone(&Utc);
        timestamps.push(Timestamp::from_standard_instant(utc, tz));
        for j in 0..width {
            let v: f64 = rec[j + 1]
                .trim()
                .parse()
                .map_err(|_| TableError::Parse { line, message: format!("bad number {:?}", &rec[j + 1]) })?;
            columns[j].push(v);
        }
    }
    if timestamps.is_empty() {
        return Err(TableError::Parse { line: 2, message: "no data rows".into() });
    }
    Ok(Parsed { header, timestamps, columns })
}

pub fn write_point_csv<W: Write>(
    out: W,
    forecasts: &PointForecastMatrix,
    actual: Option<&HourlyTimeSeries>,
    tz: Tz,
) -> Result<(), TableError> {
    if let Some(a) = actual {
        if a.timestamps() != forecasts.timestamps() {
            return Err(TableError::Domain(DomainError::Shape("actuals and forecasts are not aligned".into())));
        }
    }
    let mut header = vec!["datetime".to_string()];
    if actual.is_some() {
        header.push(ACTUAL_COLUMN.into());
    }
    header.extend(forecasts.names().iter().cloned());
    let values = forecasts.values();
    write_rows(out, header, forecasts.timestamps(), tz, |i| {
        let mut row: Vec<f64> = actual.map(|a| vec![a.values()[i]]).unwrap_or_default();
        row.extend(values.row(i).iter().copied());
        row
    })
}

/// Reads a point-forecast CSV; the `actual` column, when present, is
/// returned separately.
pub fn read_point_csv<R: Read>(
    input: R,
    tz: Tz,
    units: &str,
) -> Result<(PointForecastMatrix, Option<HourlyTimeSeries>), TableError> {
    let p = read_rows(input, tz)?;
    let mut actual = None;
    let mut cols = Vec::new();
    for (name, col) in p.header.into_iter().skip(1).zip(p.columns) {
        if name == ACTUAL_COLUMN {
            actual = Some(HourlyTimeSeries::new(units, p.timestamps.clone(), col)?);
        } else {
            cols.push((name, col));
        }
    }
    if cols.is_empty() {
        return Err(TableError::Parse { line: 1, message: "no forecast columns".into() });
    }
    Ok((PointForecastMatrix::from_columns(p.timestamps, cols)?, actual))
}

pub fn write_surface_csv<W: Write>(out: W, surface: &QuantileForecastSurface, tz: Tz) -> Result<(), TableError> {
    let mut header = vec!["datetime".to_string()];
    header.extend(surface.grid().levels().iter().map(|l| l.header()));
    let values = surface.values();
    write_rows(out, header, surface.timestamps(), tz, |i| values.row(i).iter().copied().collect())
}

pub fn read_surface_csv<R: Read>(input: R, tz: Tz) -> Result<QuantileForecastSurface, TableError> {
    let p = read_rows(input, tz)?;
    let levels = p
        .header
        .iter()
        .skip(1)
        .map(|h| QuantileLevel::from_header(h))
        .collect::<Result<Vec<_>, _>>()?;
    let grid = QuantileGrid::new(levels)?;
    let n = p.timestamps.len();
    let values = DMatrix::from_fn(n, grid.len(), |i, j| p.columns[j][i]);
    Ok(QuantileForecastSurface::new(p.timestamps, grid, values)?)
}
