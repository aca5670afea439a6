//! Client for the ENTSO-E Transparency Platform REST API.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration as StdDuration;

use chrono::{DateTime, Datelike, Duration, NaiveDate, NaiveDateTime, TimeZone, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dst::{normalize_dst, to_market_local, trim_partial_days};
use super::{IngestError, MarketPanel};
use crate::domain::HourlyTimeSeries;

pub const ENTSOE_API_URL: &str = "https://web-api.tp.entsoe.eu/api";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DocumentKind {
    DayAheadPrices,
    ForecastLoad,
}

impl DocumentKind {
    fn units(self) -> &'static str {
        match self {
            DocumentKind::DayAheadPrices => "EUR/MWh",
            DocumentKind::ForecastLoad => "MWh",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntsoeRequest {
    pub security_token: String,
    /// EIC area code, e.g. `10Y1001A1001A63L`.
    pub domain_code: String,
    /// First market day (inclusive).
    pub period_start: NaiveDate,
    /// Last market day (exclusive).
    pub period_end: NaiveDate,
    pub document_kind: DocumentKind,
    /// Preferred series resolution in minutes.
    pub resolution_preference: u32,
    /// Market time zone used for day boundaries and DST repair.
    pub market_tz: Tz,
}

impl EntsoeRequest {
    pub fn new(
        security_token: impl Into<String>,
        domain_code: impl Into<String>,
        period_start: NaiveDate,
        period_end: NaiveDate,
        document_kind: DocumentKind,
        market_tz: Tz,
    ) -> Result<Self, IngestError> {
        let req = Self {
            security_token: security_token.into(),
            domain_code: domain_code.into(),
            period_start,
            period_end,
            document_kind,
            resolution_preference: 60,
            market_tz,
        };
        req.validate()?;
        Ok(req)
    }

    pub fn with_kind(&self, kind: DocumentKind) -> Self {
        Self { document_kind: kind, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.period_start >= self.period_end {
            return Err(IngestError::InvalidRequest("period_start must precede period_end".into()));
        }
        if self.domain_code.trim().is_empty() {
            return Err(IngestError::InvalidRequest("empty domain code".into()));
        }
        if self.security_token.trim().is_empty() {
            return Err(IngestError::Auth("missing security token".into()));
        }
        if self.resolution_preference == 0 {
            return Err(IngestError::InvalidRequest("resolution preference must be positive".into()));
        }
        Ok(())
    }

    fn local_midnight_utc(&self, day: NaiveDate) -> DateTime<Utc> {
        let naive = day.and_hms_opt(0, 0, 0).expect("midnight");
        self.market_tz
            .from_local_datetime(&naive)
            .earliest()
            .unwrap_or_else(|| self.market_tz.from_utc_datetime(&naive))
            .with_timezone(&Utc)
    }

    /// Query windows split at calendar-year boundaries.
    pub fn chunks(&self) -> Vec<(DateTime<Utc>, DateTime<Utc>)> {
        let mut out = Vec::new();
        let mut start = self.period_start;
        while start < self.period_end {
            let next_year = NaiveDate::from_ymd_opt(start.year() + 1, 1, 1).expect("valid date");
            let end = next_year.min(self.period_end);
            out.push((self.local_midnight_utc(start), self.local_midnight_utc(end)));
            start = end;
        }
        out
    }

    /// Query parameters for one window.
    pub fn query(&self, start: DateTime<Utc>, end: DateTime<Utc>) -> Vec<(String, String)> {
        let fmt = |t: DateTime<Utc>| t.format("%Y%m%d%H%M").to_string();
        let mut q = vec![("securityToken".to_string(), self.security_token.clone())];
        match self.document_kind {
            DocumentKind::DayAheadPrices => {
                q.push(("documentType".into(), "A44".into()));
                q.push(("in_Domain".into(), self.domain_code.clone()));
                q.push(("out_Domain".into(), self.domain_code.clone()));
            }
            DocumentKind::ForecastLoad => {
                q.push(("documentType".into(), "A65".into()));
                q.push(("processType".into(), "A01".into()));
                q.push(("outBiddingZone_Domain".into(), self.domain_code.clone()));
            }
        }
        q.push(("periodStart".into(), fmt(start)));
        q.push(("periodEnd".into(), fmt(end)));
        q
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Minimal HTTP GET abstraction so the client can run against fixtures.
/// An `Err` means the request never produced an HTTP status.
pub trait Transport: Send + Sync {
    fn get(&self, url: &str, query: &[(String, String)]) -> Result<HttpResponse, String>;
}

#[cfg(feature = "http")]
pub struct UreqTransport {
    agent: ureq::Agent,
}

#[cfg(feature = "http")]
impl UreqTransport {
    pub fn new(timeout: StdDuration) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build();
        Self { agent: config.into() }
    }
}

#[cfg(feature = "http")]
impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(StdDuration::from_secs(120))
    }
}

#[cfg(feature = "http")]
impl Transport for UreqTransport {
    fn get(&self, url: &str, query: &[(String, String)]) -> Result<HttpResponse, String> {
        let mut req = self.agent.get(url);
        for (k, v) in query {
            req = req.query(k, v);
        }
        let mut resp = req.call().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .with_config()
            .limit(256 * 1024 * 1024)
            .read_to_string()
            .map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

/// Retries for 429, 5xx and transport failures: at most `max_retries`
/// further attempts, sleeping `base_delay * 2^attempt` in between.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: StdDuration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 3, base_delay: StdDuration::from_secs(1) }
    }
}

/// What to do with positions absent from a `Period`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MissingPointPolicy {
    #[default]
    Error,
    /// Linear interpolation between present neighbours; edges copy the
    /// nearest value.
    Interpolate,
}

pub struct EntsoeClient {
    transport: Box<dyn Transport>,
    base_url: String,
    retry: RetryPolicy,
    cache_dir: Option<PathBuf>,
    missing: MissingPointPolicy,
}

impl EntsoeClient {
    pub fn new(transport: Box<dyn Transport>) -> Self {
        Self {
            transport,
            base_url: ENTSOE_API_URL.to_string(),
            retry: RetryPolicy::default(),
            cache_dir: None,
            missing: MissingPointPolicy::Error,
        }
    }

    #[cfg(feature = "http")]
    pub fn live() -> Self {
        Self::new(Box::new(UreqTransport::default()))
    }

    pub fn with_base_url(mut self, url: impl Into<String>) -> Self {
        self.base_url = url.into();
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    pub fn with_missing_policy(mut self, policy: MissingPointPolicy) -> Self {
        self.missing = policy;
        self
    }

    fn cache_key(&self, query: &[(String, String)]) -> String {
        let mut pairs: Vec<_> = query.iter().filter(|(k, _)| k != "securityToken").cloned().collect();
        pairs.sort();
        let mut h = Sha256::new();
        h.update(self.base_url.as_bytes());
        for (k, v) in pairs {
            h.update(b"\x00");
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
        }
        format!("{:x}", h.finalize())
    }

    fn get_document(&self, query: &[(String, String)]) -> Result<String, IngestError> {
        let cache_path = self.cache_dir.as_ref().map(|d| d.join(format!("{}.xml", self.cache_key(query))));
        if let Some(p) = &cache_path {
            if let Ok(body) = std::fs::read_to_string(p) {
                return Ok(body);
            }
        }
        let mut attempt = 0u32;
        loop {
            let retryable = match self.transport.get(&self.base_url, query) {
                Ok(resp) => match resp.status {
                    200 => {
                        if let Some(p) = &cache_path {
                            write_atomic(p, &resp.body)?;
                        }
                        return Ok(resp.body);
                    }
                    401 | 403 => return Err(IngestError::Auth(reason_text(&resp.body))),
                    400 => return Err(IngestError::BadInterval(reason_text(&resp.body))),
                    429 => IngestError::RateLimited { attempts: attempt + 1 },
                    s if s >= 500 => IngestError::Http { status: s, body: reason_text(&resp.body) },
                    s => return Err(IngestError::Http { status: s, body: reason_text(&resp.body) }),
                },
                Err(e) => IngestError::Network(e),
            };
            if attempt >= self.retry.max_retries {
                return Err(retryable);
            }
            std::thread::sleep(self.retry.base_delay * 2u32.pow(attempt));
            attempt += 1;
        }
    }

    /// Raw hourly observations in UTC covering the request, year by year.
    pub fn fetch_raw(&self, req: &EntsoeRequest) -> Result<Vec<(DateTime<Utc>, f64)>, IngestError> {
        req.validate()?;
        let mut merged: BTreeMap<DateTime<Utc>, f64> = BTreeMap::new();
        for (start, end) in req.chunks() {
            let body = self.get_document(&req.query(start, end))?;
            for (t, v) in parse_document(&body, req.resolution_preference, self.missing)? {
                if t >= start && t < end {
                    merged.entry(t).or_insert(v);
                }
            }
        }
        Ok(merged.into_iter().collect())
    }

    /// Normalised hourly series for the request's document kind.
    pub fn fetch_series(&self, req: &EntsoeRequest) -> Result<HourlyTimeSeries, IngestError> {
        let raw = self.fetch_raw(req)?;
        let local = trim_partial_days(to_market_local(&raw, req.market_tz));
        normalize_dst(&local, req.market_tz, req.document_kind.units())
    }

    pub fn fetch_day_ahead_prices(&self, req: &EntsoeRequest) -> Result<HourlyTimeSeries, IngestError> {
        self.fetch_series(&req.with_kind(DocumentKind::DayAheadPrices))
    }

    pub fn fetch_forecast_load(&self, req: &EntsoeRequest) -> Result<HourlyTimeSeries, IngestError> {
        self.fetch_series(&req.with_kind(DocumentKind::ForecastLoad))
    }

    pub fn fetch_panel(&self, req: &EntsoeRequest, with_load: bool) -> Result<MarketPanel, IngestError> {
        let price = self.fetch_day_ahead_prices(req)?;
        let load = if with_load { Some(self.fetch_forecast_load(req)?) } else { None };
        MarketPanel::new(price, load)
    }
}

fn write_atomic(path: &std::path::Path, body: &str) -> Result<(), IngestError> {
    use std::io::Write;
    let dir = path.parent().unwrap_or_else(|| std::path::Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(body.as_bytes())?;
    tmp.persist(path).map_err(|e| IngestError::Io(e.to_string()))?;
    Ok(())
}

/// Best-effort extraction of `Reason/text` from an error document.
fn reason_text(body: &str) -> String {
    if let Ok(doc) = roxmltree::Document::parse(body) {
        let texts: Vec<&str> = doc
            .descendants()
            .filter(|n| n.tag_name().name() == "text")
            .filter_map(|n| n.text())
            .collect();
        if !texts.is_empty() {
            return texts.join("; ");
        }
    }
    body.chars().take(200).collect()
}

fn child<'a, 'i>(node: roxmltree::Node<'a, 'i>, name: &str) -> Option<roxmltree::Node<'a, 'i>> {
    node.children().find(|c| c.tag_name().name() == name)
}

fn child_text<'a>(node: roxmltree::Node<'a, '_>, name: &str) -> Option<&'a str> {
    child(node, name).and_then(|c| c.text()).map(str::trim)
}

fn parse_instant(s: &str) -> Result<DateTime<Utc>, IngestError> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%MZ")
        .map(|n| Utc.from_utc_datetime(&n))
        .map_err(|_| IngestError::MalformedDocument(format!("bad instant {s:?}")))
}

/// ISO-8601 duration like `PT15M`, `PT60M` or `PT1H`, in minutes.
fn parse_resolution(s: &str) -> Result<u32, IngestError> {
    let bad = || IngestError::MalformedDocument(format!("unsupported resolution {s:?}"));
    let rest = s.strip_prefix("PT").ok_or_else(bad)?;
    if let Some(m) = rest.strip_suffix('M') {
        m.parse::<u32>().ok().filter(|m| *m > 0).ok_or_else(bad)
    } else if let Some(h) = rest.strip_suffix('H') {
        h.parse::<u32>().ok().filter(|h| *h > 0).map(|h| h * 60).ok_or_else(bad)
    } else {
        Err(bad())
    }
}

struct Block {
    resolution: u32,
    points: Vec<(DateTime<Utc>, f64)>,
}

fn parse_period(period: roxmltree::Node, missing: MissingPointPolicy) -> Result<Block, IngestError> {
    let interval = child(period, "timeInterval")
        .ok_or_else(|| IngestError::MalformedDocument("Period without timeInterval".into()))?;
    let start = parse_instant(
        child_text(interval, "start").ok_or_else(|| IngestError::MalformedDocument("missing start".into()))?,
    )?;
    let end = parse_instant(
        child_text(interval, "end").ok_or_else(|| IngestError::MalformedDocument("missing end".into()))?,
    )?;
    let resolution = parse_resolution(
        child_text(period, "resolution").ok_or_else(|| IngestError::MalformedDocument("missing resolution".into()))?,
    )?;
    let span = (end - start).num_minutes();
    if span <= 0 || span % resolution as i64 != 0 {
        return Err(IngestError::MalformedDocument(format!("interval {start}..{end} not a multiple of {resolution} min")));
    }
    let slots = (span / resolution as i64) as usize;
    let mut values: Vec<Option<f64>> = vec![None; slots];
    let mut any = false;
    for point in period.children().filter(|c| c.tag_name().name() == "Point") {
        let pos: usize = child_text(point, "position")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| IngestError::MalformedDocument("Point without numeric position".into()))?;
        let raw = child_text(point, "price.amount")
            .or_else(|| child_text(point, "quantity"))
            .ok_or_else(|| IngestError::MalformedDocument(format!("Point {pos} without value")))?;
        let v: f64 = raw
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| IngestError::MalformedDocument(format!("Point {pos} value {raw:?}")))?;
        if pos == 0 || pos > slots {
            return Err(IngestError::MalformedDocument(format!("position {pos} outside 1..={slots}")));
        }
        values[pos - 1] = Some(v);
        any = true;
    }
    if !any {
        return Err(IngestError::MalformedDocument("Period without Point elements".into()));
    }
    let filled = fill_missing(&values, missing)?;
    let step = Duration::minutes(resolution as i64);
    let points = filled.into_iter().enumerate().map(|(i, v)| (start + step * i as i32, v)).collect();
    Ok(Block { resolution, points })
}

fn fill_missing(values: &[Option<f64>], policy: MissingPointPolicy) -> Result<Vec<f64>, IngestError> {
    if let Some(i) = values.iter().position(Option::is_none) {
        if policy == MissingPointPolicy::Error {
            return Err(IngestError::MalformedDocument(format!("position {} missing", i + 1)));
        }
    }
    let present: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
    Ok((0..values.len())
        .map(|i| {
            if let Some(v) = values[i] {
                return v;
            }
            let after = present.partition_point(|&p| p < i);
            match (after.checked_sub(1).map(|a| present[a]), present.get(after)) {
                (Some(a), Some(&b)) => {
                    let (va, vb) = (values[a].unwrap(), values[b].unwrap());
                    va + (vb - va) * (i - a) as f64 / (b - a) as f64
                }
                (Some(a), None) => values[a].unwrap(),
                (None, Some(&b)) => values[b].unwrap(),
                (None, None) => unreachable!("at least one point present"),
            }
        })
        .collect())
}

/// Parses a market document into hourly UTC observations.
///
/// Periods whose resolution equals `resolution_preference` (minutes) are
/// used when present, otherwise those with the finest resolution. Selected
/// periods are merged in document order (the first value for an instant
/// wins) and averaged to hourly.
pub fn parse_document(
    xml: &str,
    resolution_preference: u32,
    missing: MissingPointPolicy,
) -> Result<Vec<(DateTime<Utc>, f64)>, IngestError> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| IngestError::MalformedDocument(e.to_string()))?;
    let root = doc.root_element();
    match root.tag_name().name() {
        "Publication_MarketDocument" | "GL_MarketDocument" => {}
        "Acknowledgement_MarketDocument" => {
            return Err(IngestError::MalformedDocument(format!("no data: {}", reason_text(xml))));
        }
        other => return Err(IngestError::MalformedDocument(format!("unexpected root element {other}"))),
    }
    let mut blocks = Vec::new();
    for ts in root.children().filter(|c| c.tag_name().name() == "TimeSeries") {
        for period in ts.children().filter(|c| c.tag_name().name() == "Period") {
            blocks.push(parse_period(period, missing)?);
        }
    }
    if blocks.is_empty() {
        return Err(IngestError::MalformedDocument("no TimeSeries with a Period".into()));
    }
    let chosen = if blocks.iter().any(|b| b.resolution == resolution_preference) {
        resolution_preference
    } else {
        blocks.iter().map(|b| b.resolution).min().expect("non-empty")
    };
    if chosen > 60 || 60 % chosen != 0 {
        return Err(IngestError::MalformedDocument(format!("cannot aggregate {chosen}-minute data to hourly")));
    }
    let mut merged: BTreeMap<DateTime<Utc>, f64> = BTreeMap::new();
    for b in blocks.iter().filter(|b| b.resolution == chosen) {
        for &(t, v) in &b.points {
            merged.entry(t).or_insert(v);
        }
    }
    let mut hourly: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for (t, v) in merged {
        let e = hourly.entry(t.timestamp().div_euclid(3600)).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    Ok(hourly
        .into_iter()
        .map(|(h, (s, c))| (Utc.timestamp_opt(h * 3600, 0).single().expect("valid"), s / c as f64))
        .collect())
}
