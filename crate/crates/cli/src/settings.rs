//! Effective per-command settings: defaults, then flags, then the config
//! file. Every layer is a TOML table; the merged table is deserialised with
//! unknown keys rejected, which doubles as the schema check.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use chrono_tz::Tz;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::CliError;

pub const DEFAULT_TZ: &str = "Europe/Berlin";

/// Top level of a run configuration file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub tz: Option<String>,
    pub jobs: Option<usize>,
    pub fetch: Option<Table>,
    pub point: Option<Table>,
    pub backtest: Option<Table>,
    pub evaluate: Option<Table>,
}

impl RunConfig {
    /// Parse and validate every section before any work starts.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::other(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::parse(format!("config {}: {e}", path.display())))?;
        let check = |name: &str, t: &Option<Table>, f: &dyn Fn(Table) -> Result<(), CliError>| match t {
            Some(t) => f(t.clone()).map_err(|e| CliError::parse(format!("config [{name}]: {}", e.message))),
            None => Ok(()),
        };
        check("fetch", &cfg.fetch, &|t| decode::<FetchSettings>(t).map(drop))?;
        check("point", &cfg.point, &|t| decode::<PointSettings>(t).map(drop))?;
        check("backtest", &cfg.backtest, &|t| decode::<BacktestSettings>(t).map(drop))?;
        check("evaluate", &cfg.evaluate, &|t| decode::<EvaluateSettings>(t).map(drop))?;
        if let Some(tz) = &cfg.tz {
            parse_tz(tz)?;
        }
        Ok(cfg)
    }
}

fn decode<T: DeserializeOwned>(t: Table) -> Result<T, CliError> {
    Value::Table(t).try_into().map_err(|e: toml::de::Error| CliError::parse(e.message().to_string()))
}

/// Flags given on the command line, as a TOML table.
#[derive(Default)]
pub struct Flags(Table);

impl Flags {
    pub fn set<T: Serialize>(&mut self, key: &str, value: Option<T>) -> &mut Self {
        if let Some(v) = value {
            self.0.insert(key.into(), Value::try_from(v).expect("flag values are plain data"));
        }
        self
    }

    pub fn flag(&mut self, key: &str, on: bool) -> &mut Self {
        if on {
            self.0.insert(key.into(), Value::Boolean(true));
        }
        self
    }
}

/// `defaults <- flags <- config section`, plus the file's global `tz`.
pub fn merge<T: DeserializeOwned + Serialize + Default>(
    flags: Flags,
    section: Option<&Table>,
    global_tz: Option<&String>,
) -> Result<T, CliError> {
    let mut table = match Value::try_from(T::default()).expect("defaults serialise") {
        Value::Table(t) => t,
        _ => unreachable!("settings are tables"),
    };
    table.extend(flags.0);
    if let Some(tz) = global_tz {
        table.insert("tz".into(), Value::String(tz.clone()));
    }
    if let Some(s) = section {
        table.extend(s.clone());
    }
    decode(table)
}

pub fn parse_tz(s: &str) -> Result<Tz, CliError> {
    Tz::from_str(s).map_err(|_| CliError::parse(format!("unknown time zone {s:?}")))
}

pub fn parse_date(s: &str, what: &str) -> Result<NaiveDate, CliError> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| CliError::parse(format!("{what}: expected YYYY-MM-DD, got {s:?}")))
}

pub fn require<'a, T>(v: &'a Option<T>, what: &str) -> Result<&'a T, CliError> {
    v.as_ref().ok_or_else(|| CliError::usage(format!("missing required setting `{what}`")))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FetchSettings {
    pub tz: String,
    pub domain: Option<String>,
    pub start: Option<String>,
    pub end: Option<String>,
    pub out: Option<PathBuf>,
    /// Defaults to `.entsoe-cache` next to the output file.
    pub cache_dir: Option<PathBuf>,
    pub with_load: bool,
    pub resolution_minutes: u32,
    pub base_url: Option<String>,
    /// `error` or `interpolate`.
    pub missing_points: String,
}

impl Default for FetchSettings {
    fn default() -> Self {
        Self {
            tz: DEFAULT_TZ.into(),
            domain: None,
            start: None,
            end: None,
            out: None,
            cache_dir: None,
            with_load: true,
            resolution_minutes: 60,
            base_url: None,
            missing_points: "error".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointSettings {
    pub tz: String,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Defaults to `<out>_metrics.csv`.
    pub metrics: Option<PathBuf>,
    /// `utc` or `market-local` for the panel's datetime column.
    pub basis: String,
    pub windows: Vec<usize>,
    pub lags: Vec<usize>,
    /// Use the load forecast column; unset means "when present".
    pub load: Option<bool>,
    pub per_hour: bool,
    pub first_day: Option<String>,
    pub last_day: Option<String>,
    /// `none`, `mean-std` or `median-mad`.
    pub scaler: String,
    /// `none` or a transformation name such as `arcsinh`.
    pub vst: String,
    pub vst_lambda: Option<f64>,
    pub vst_c: Option<f64>,
    /// `literal` or `monotone`.
    pub vst_formula: Option<String>,
}

impl Default for PointSettings {
    fn default() -> Self {
        Self {
            tz: DEFAULT_TZ.into(),
            input: None,
            out: None,
            metrics: None,
            basis: "utc".into(),
            windows: vec![182, 364, 728],
            lags: vec![1, 2, 7],
            load: None,
            per_hour: true,
            first_day: None,
            last_day: None,
            scaler: "none".into(),
            vst: "none".into(),
            vst_lambda: None,
            vst_c: None,
            vst_formula: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestSettings {
    pub tz: String,
    /// Point CSV with an `actual` column.
    pub input: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// Variant names, or `ALL`.
    pub variants: Vec<String>,
    pub window: usize,
    pub alphas: Vec<f64>,
    /// Quantile levels; empty means the 99 percentiles.
    pub grid: Vec<f64>,
    pub crossing_repair: bool,
    pub skip_failed: bool,
    pub significance: f64,
    pub factor_count: usize,
    pub lambda: f64,
    /// Fixed smoothing bandwidth; unset selects the rule of thumb.
    pub bandwidth: Option<f64>,
    pub intercept: bool,
    pub prediction_days: Option<usize>,
    pub seeded_demo: bool,
    pub seed: u64,
}

impl Default for BacktestSettings {
    fn default() -> Self {
        Self {
            tz: DEFAULT_TZ.into(),
            input: None,
            out_dir: None,
            variants: vec!["QRA".into()],
            window: 72,
            alphas: vec![50.0, 70.0, 90.0],
            grid: Vec::new(),
            crossing_repair: true,
            skip_failed: false,
            significance: 0.05,
            factor_count: 1,
            lambda: 1.0,
            bandwidth: None,
            intercept: true,
            prediction_days: None,
            seeded_demo: false,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSettings {
    pub tz: String,
    pub surface: Option<PathBuf>,
    /// Point CSV with an `actual` column, or a price panel CSV.
    pub actuals: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub label: String,
    pub alphas: Vec<f64>,
    pub significance: f64,
}

impl Default for EvaluateSettings {
    fn default() -> Self {
        Self {
            tz: DEFAULT_TZ.into(),
            surface: None,
            actuals: None,
            out_dir: None,
            label: "surface".into(),
            alphas: vec![50.0, 70.0, 90.0],
            significance: 0.05,
        }
    }
}

/// Echo the effective settings as JSON.
pub fn echo<T: Serialize>(path: &Path, settings: &T) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(settings).expect("settings serialise");
    std::fs::write(path, json + "\n").map_err(|e| CliError::other(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_overrides_flags_overrides_defaults() {
        let mut flags = Flags::default();
        flags.set("window", Some(30usize)).set("lambda", Some(0.5));
        let section: Table = toml::from_str("window = 90\nvariants = [\"SQRA\"]").unwrap();
        let s: BacktestSettings = merge(flags, Some(&section), None).unwrap();
        assert_eq!(s.window, 90);
        assert_eq!(s.lambda, 0.5);
        assert_eq!(s.variants, vec!["SQRA"]);
        assert_eq!(s.alphas, vec![50.0, 70.0, 90.0]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let section: Table = toml::from_str("windw = 90").unwrap();
        assert!(merge::<BacktestSettings>(Flags::default(), Some(&section), None).is_err());
        let section: Table = toml::from_str("window = \"long\"").unwrap();
        assert!(merge::<BacktestSettings>(Flags::default(), Some(&section), None).is_err());
    }
}
