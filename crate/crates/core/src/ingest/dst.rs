use chrono::{DateTime, Duration, LocalResult, NaiveDateTime, TimeZone, Timelike, Utc};
use chrono_tz::Tz;

use super::IngestError;
use crate::domain::{HourlyTimeSeries, Timestamp};

/// Converts UTC observations to market-local wall-clock labels. Around the
/// autumn change two observations share a label; in spring one label is
/// skipped.
pub fn to_market_local(obs: &[(DateTime<Utc>, f64)], tz: Tz) -> Vec<(NaiveDateTime, f64)> {
    obs.iter().map(|(t, v)| (t.with_timezone(&tz).naive_local(), *v)).collect()
}

/// Drops a leading day that does not start at hour 0 and a trailing day
/// that does not end at hour 23.
pub fn trim_partial_days(mut obs: Vec<(NaiveDateTime, f64)>) -> Vec<(NaiveDateTime, f64)> {
    obs.sort_by_key(|o| o.0);
    if let Some(first) = obs.first().map(|o| o.0) {
        if first.hour() != 0 {
            obs.retain(|o| o.0.date() != first.date());
        }
    }
    if let Some(last) = obs.last().map(|o| o.0) {
        if last.hour() != 23 {
            obs.retain(|o| o.0.date() != last.date());
        }
    }
    obs
}

/// Repairs DST artefacts in wall-clock labelled hourly observations: the
/// repeated autumn hour becomes the mean of its two observations and the
/// skipped spring hour is linearly interpolated from its neighbours. Any
/// other missing hour is a [`IngestError::Gap`]; any other repeated label a
/// [`IngestError::Duplicate`]. Input order does not matter.
pub fn normalize_dst(obs: &[(NaiveDateTime, f64)], tz: Tz, units: &str) -> Result<HourlyTimeSeries, IngestError> {
    let mut sorted = obs.to_vec();
    sorted.sort_by_key(|o| o.0);
    if sorted.is_empty() {
        return Ok(HourlyTimeSeries::new(units, Vec::new(), Vec::new())?);
    }
    for o in &sorted {
        if o.0.minute() != 0 || o.0.second() != 0 {
            return Err(IngestError::InvalidRequest(format!("{} is not on the hour", o.0)));
        }
    }

    // Collapse repeated labels.
    let mut labels: Vec<NaiveDateTime> = Vec::with_capacity(sorted.len());
    let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        let label = sorted[i].0;
        if j - i > 1 {
            let repeat_ok = j - i == 2 && matches!(tz.from_local_datetime(&label), LocalResult::Ambiguous(..));
            if !repeat_ok {
                return Err(IngestError::Duplicate(label));
            }
        }
        let mean = sorted[i..j].iter().map(|o| o.1).sum::<f64>() / (j - i) as f64;
        labels.push(label);
        values.push(mean);
        i = j;
    }

    let first = labels[0];
    let last = *labels.last().expect("non-empty");
    if first.hour() != 0 || last.hour() != 23 {
        return Err(IngestError::Domain(crate::domain::DomainError::PartialDay(labels.len())));
    }

    let mut out_ts = Vec::new();
    let mut out_v: Vec<Option<f64>> = Vec::new();
    let mut missing = Vec::new();
    let mut k = 0;
    let mut t = first;
    while t <= last {
        if k < labels.len() && labels[k] == t {
            out_v.push(Some(values[k]));
            k += 1;
        } else if matches!(tz.from_local_datetime(&t), LocalResult::None) {
            out_v.push(None);
        } else {
            missing.push(t);
            out_v.push(None);
        }
        out_ts.push(Timestamp::from_market_local(t.date(), t.hour(), tz)?);
        t += Duration::hours(1);
    }
    if !missing.is_empty() {
        return Err(IngestError::Gap { missing });
    }

    let mut filled = Vec::with_capacity(out_v.len());
    for idx in 0..out_v.len() {
        match out_v[idx] {
            Some(v) => filled.push(v),
            None => {
                let prev = idx.checked_sub(1).and_then(|p| out_v[p]);
                let next = out_v.get(idx + 1).copied().flatten();
                match (prev, next) {
                    (Some(a), Some(b)) => filled.push(0.5 * (a + b)),
                    _ => {
                        let label = out_ts[idx].local_label();
                        return Err(IngestError::Gap { missing: vec![label] });
                    }
                }
            }
        }
    }
    Ok(HourlyTimeSeries::new(units, out_ts, filled)?)
}
