use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::{Path, PathBuf};

use chrono::Duration;
use chrono_tz::Tz;
use qra_core::backtest::{compare_variants, write_bundle, BacktestConfig, BacktestError, BacktestReport, FailurePolicy};
use qra_core::evaluate::{evaluate_values, write_aps_csv, write_metrics_csv, ApsRow, EvaluateError};
use qra_core::ingest::{
    load_csv, write_observations_csv, CsvOptions, DocumentKind, EntsoeClient, EntsoeRequest, IngestError,
    MarketPanel, MissingPointPolicy, TimeBasis,
};
use qra_core::pointmodel::{
    point_metrics_matrix, rolling_point_forecasts, Exogenous, FeatureSpec, PointMetricsReport, PointModelConfig,
    PointModelError,
};
use qra_core::qrsolve::{L1Penalty, SmoothingBandwidth, SolverError};
use qra_core::synthetic::demo_panel;
use qra_core::tables::{read_point_csv, read_surface_csv, write_point_csv, TableError};
use qra_core::transform::{Formula, PipelineSpec, ScalerKind, VstKind, VstParams};
use qra_core::variants::{VariantError, VariantName, VariantSpec};
use qra_core::{Execution, HourlyTimeSeries, PointForecastMatrix, QuantileGrid, Timestamp};

use crate::settings::{
    echo, merge, parse_date, parse_tz, require, BacktestSettings, EvaluateSettings, FetchSettings, Flags,
    PointSettings, RunConfig,
};
use crate::{BacktestArgs, CliError, Command, EvaluateArgs, FetchArgs, PointArgs};

pub fn dispatch(cmd: Command, file: &RunConfig, env_token: Option<String>) -> Result<(), CliError> {
    let tz = file.tz.as_ref();
    match cmd {
        Command::Fetch(a) => {
            let token = a.token.clone().or(env_token);
            let s: FetchSettings = merge(fetch_flags(&a), file.fetch.as_ref(), tz)?;
            let token = token.ok_or_else(|| {
                CliError::auth(format!(
                    "no ENTSO-E security token: set {} or pass --token\nusage: qra fetch --domain <EIC> --start <YYYY-MM-DD> --end <YYYY-MM-DD> --out <panel.csv>",
                    crate::TOKEN_ENV
                ))
            })?;
            let client = live_client(&s)?;
            fetch_with_client(&s, &token, client).map(drop)
        }
        Command::Point(a) => point(&merge(point_flags(&a), file.point.as_ref(), tz)?),
        Command::Backtest(a) => {
            let explicit_window =
                a.window.is_some() || file.backtest.as_ref().is_some_and(|t| t.contains_key("window"));
            let explicit_days =
                a.prediction_days.is_some() || file.backtest.as_ref().is_some_and(|t| t.contains_key("prediction_days"));
            let mut s: BacktestSettings = merge(backtest_flags(&a), file.backtest.as_ref(), tz)?;
            if s.seeded_demo {
                if !explicit_window {
                    s.window = DEMO_WINDOW;
                }
                if !explicit_days {
                    s.prediction_days = Some(DEMO_PREDICTION_DAYS);
                }
            }
            backtest(&s)
        }
        Command::Evaluate(a) => evaluate(&merge(evaluate_flags(&a), file.evaluate.as_ref(), tz)?),
    }
}

fn fetch_flags(a: &FetchArgs) -> Flags {
    let mut f = Flags::default();
    f.set("domain", a.domain.clone())
        .set("start", a.start.clone())
        .set("end", a.end.clone())
        .set("out", a.out.clone())
        .set("tz", a.tz.clone())
        .set("cache_dir", a.cache_dir.clone())
        .set("with_load", a.no_load.then_some(false))
        .set("missing_points", a.interpolate_missing.then_some("interpolate"));
    f
}

fn point_flags(a: &PointArgs) -> Flags {
    let mut f = Flags::default();
    f.set("input", a.input.clone())
        .set("out", a.out.clone())
        .set("metrics", a.metrics.clone())
        .set("windows", a.windows.clone())
        .set("lags", a.lags.clone())
        .set("load", a.no_load.then_some(false))
        .set("per_hour", a.pooled.then_some(false))
        .set("first_day", a.first_day.clone())
        .set("last_day", a.last_day.clone())
        .set("tz", a.tz.clone())
        .set("basis", a.basis.clone())
        .set("scaler", a.scaler.clone())
        .set("vst", a.vst.clone());
    f
}

fn backtest_flags(a: &BacktestArgs) -> Flags {
    let mut f = Flags::default();
    f.set("input", a.input.clone())
        .set("out_dir", a.out_dir.clone())
        .set("variants", a.variant.clone())
        .set("window", a.window)
        .set("alphas", a.alphas.clone())
        .set("grid", a.grid.clone())
        .set("crossing_repair", a.no_repair.then_some(false))
        .flag("skip_failed", a.skip_failed)
        .set("factor_count", a.factor_count)
        .set("lambda", a.lambda)
        .set("bandwidth", a.bandwidth)
        .set("prediction_days", a.prediction_days)
        .set("tz", a.tz.clone())
        .flag("seeded_demo", a.seeded_demo)
        .set("seed", a.seed);
    f
}

fn evaluate_flags(a: &EvaluateArgs) -> Flags {
    let mut f = Flags::default();
    f.set("surface", a.surface.clone())
        .set("actuals", a.actuals.clone())
        .set("out_dir", a.out_dir.clone())
        .set("label", a.label.clone())
        .set("alphas", a.alphas.clone())
        .set("significance", a.significance)
        .set("tz", a.tz.clone());
    f
}

pub fn ingest_error(e: IngestError) -> CliError {
    let msg = e.to_string();
    match e {
        IngestError::Auth(_) => CliError::auth(msg),
        IngestError::Network(_) | IngestError::RateLimited { .. } => CliError::network(msg),
        IngestError::Http { status, .. } if status >= 500 => CliError::network(msg),
        IngestError::MalformedDocument(_)
        | IngestError::Parse { .. }
        | IngestError::Gap { .. }
        | IngestError::Duplicate(_)
        | IngestError::Domain(_) => CliError::parse(msg),
        _ => CliError::other(msg),
    }
}

fn table_error(path: &Path, e: TableError) -> CliError {
    let msg = format!("{}: {e}", path.display());
    match e {
        TableError::Io(_) => CliError::other(msg),
        _ => CliError::parse(msg),
    }
}

fn point_error(e: PointModelError) -> CliError {
    CliError::other(e.to_string())
}

pub fn backtest_error(e: BacktestError) -> CliError {
    let msg = e.to_string();
    match e {
        BacktestError::Fit { source: VariantError::Solver { source: SolverError::NotConverged { .. }, .. }, .. } => {
            CliError::convergence(format!("{msg} (use --skip-failed to continue past failing days)"))
        }
        BacktestError::Table(TableError::Parse { .. }) => CliError::parse(msg),
        _ => CliError::other(msg),
    }
}

fn evaluate_error(e: EvaluateError) -> CliError {
    CliError::other(e.to_string())
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::other(format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| io_error(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

/// `dir/stem<suffix>` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    path.with_file_name(format!("{stem}{suffix}"))
}

// ---------------------------------------------------------------- fetch

fn live_client(s: &FetchSettings) -> Result<EntsoeClient, CliError> {
    let mut c = EntsoeClient::live();
    if let Some(url) = &s.base_url {
        c = c.with_base_url(url.clone());
    }
    Ok(c)
}

/// Fetch into `s.out` through `client` (cache applied here), returning the
/// output path.
pub fn fetch_with_client(s: &FetchSettings, token: &str, client: EntsoeClient) -> Result<PathBuf, CliError> {
    let tz = parse_tz(&s.tz)?;
    let out = require(&s.out, "out")?.clone();
    let start = parse_date(require(&s.start, "start")?, "start")?;
    let end = parse_date(require(&s.end, "end")?, "end")?;
    let domain = require(&s.domain, "domain")?;
    let missing = match s.missing_points.as_str() {
        "error" => MissingPointPolicy::Error,
        "interpolate" => MissingPointPolicy::Interpolate,
        other => return Err(CliError::parse(format!("missing_points must be error or interpolate, got {other:?}"))),
    };
    let cache = s.cache_dir.clone().unwrap_or_else(|| out.with_file_name(".entsoe-cache"));
    let client = client.with_cache_dir(cache).with_missing_policy(missing);
    let mut req = EntsoeRequest::new(token, domain.clone(), start, end, DocumentKind::DayAheadPrices, tz)
        .map_err(ingest_error)?;
    req.resolution_preference = s.resolution_minutes;
    let prices = client.fetch_raw(&req).map_err(ingest_error)?;
    let load = if s.with_load {
        Some(client.fetch_raw(&req.with_kind(DocumentKind::ForecastLoad)).map_err(ingest_error)?)
    } else {
        None
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    write_observations_csv(&out, &prices, load.as_deref()).map_err(ingest_error)?;
    let panel = load_csv(&out, &CsvOptions::new(tz)).map_err(ingest_error)?;
    echo(&sibling(&out, "_config.json"), s)?;
    println!(
        "fetched {} days of prices{} for {domain} into {}",
        panel.num_days(),
        if panel.load_forecast.is_some() { " and load forecasts" } else { "" },
        out.display()
    );
    Ok(out)
}

// ---------------------------------------------------------------- point

fn pipeline_spec(s: &PointSettings) -> Result<PipelineSpec, CliError> {
    let scaler = match s.scaler.as_str() {
        "none" => None,
        "mean-std" => Some(ScalerKind::MeanStd),
        "median-mad" => Some(ScalerKind::MedianMad),
        other => return Err(CliError::parse(format!("unknown scaler {other:?}"))),
    };
    let vst = if s.vst == "none" {
        None
    } else {
        let kind = VstKind::ALL
            .into_iter()
            .find(|k| serde_json::to_value(k).ok().and_then(|v| v.as_str().map(|n| n == s.vst)).unwrap_or(false))
            .ok_or_else(|| CliError::parse(format!("unknown transformation {:?}", s.vst)))?;
        let mut p = VstParams::new(kind);
        if let Some(l) = s.vst_lambda {
            p = p.with_lambda(l);
        }
        if let Some(c) = s.vst_c {
            p = p.with_c(c);
        }
        match s.vst_formula.as_deref() {
            None | Some("literal") => {}
            Some("monotone") => p = p.with_formula(Formula::Monotone),
            Some(other) => return Err(CliError::parse(format!("unknown formula {other:?}"))),
        }
        p.validate().map_err(|e| CliError::parse(e.to_string()))?;
        Some(p)
    };
    Ok(PipelineSpec::new(scaler, vst))
}

pub struct PointOutput {
    pub forecasts: PointForecastMatrix,
    pub actual: HourlyTimeSeries,
    pub metrics: Vec<(String, PointMetricsReport)>,
}

/// Rolling point forecasts for every window on one panel.
pub fn point_forecasts(panel: &MarketPanel, s: &PointSettings) -> Result<PointOutput, CliError> {
    if s.windows.is_empty() {
        return Err(CliError::parse("no calibration windows"));
    }
    let use_load = s.load.unwrap_or(panel.load_forecast.is_some());
    if use_load && panel.load_forecast.is_none() {
        return Err(CliError::parse("load requested but the panel has no load forecast column"));
    }
    let features = FeatureSpec {
        lags: s.lags.clone(),
        exogenous: if use_load { vec![Exogenous::LoadForecast] } else { Vec::new() },
        include_intercept: true,
    };
    let mut cfg = PointModelConfig::ols("ols", features).with_transform(pipeline_spec(s)?);
    cfg.per_hour = s.per_hour;
    let days = panel.num_days();
    let first_panel_day = panel.price_da.first_day().ok_or_else(|| CliError::parse("empty panel"))?;
    let history = s.windows.iter().max().copied().unwrap_or(0) + s.lags.iter().max().copied().unwrap_or(0);
    let first = match &s.first_day {
        Some(d) => parse_date(d, "first_day")?,
        None => first_panel_day + Duration::days(history as i64),
    };
    let last = match &s.last_day {
        Some(d) => parse_date(d, "last_day")?,
        None => first_panel_day + Duration::days(days as i64 - 1),
    };
    if s.first_day.is_none() && history >= days {
        return Err(CliError::other(format!(
            "insufficient history: windows and lags need {history} days before the first forecast, panel has {days}"
        )));
    }
    let forecasts = rolling_point_forecasts(panel, &[cfg], &s.windows, first, last, Execution::default())
        .map_err(point_error)?;
    let metrics = point_metrics_matrix(&panel.price_da, &forecasts).map_err(point_error)?;
    let i0 = panel.price_da.day_index(first).expect("forecast days lie in the panel");
    let actual = panel.price_da.slice_days(i0, i0 + forecasts.nrows() / 24);
    Ok(PointOutput { forecasts, actual, metrics })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

fn print_point_table(metrics: &[(String, PointMetricsReport)]) {
    println!("{:<14} {:>10} {:>12} {:>10} {:>8} {:>8}", "window", "MAE", "MSE", "RMSE", "MAPE", "R2");
    for (name, m) in metrics {
        println!(
            "{:<14} {:>10.4} {:>12.4} {:>10.4} {:>8} {:>8}",
            name,
            m.mae,
            m.mse,
            m.rmse,
            fmt_opt(m.mape),
            fmt_opt(m.r2)
        );
    }
}

fn write_point_metrics(path: &Path, metrics: &[(String, PointMetricsReport)]) -> Result<(), CliError> {
    use std::io::Write;
    let mut w = create(path)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let mut body = String::from("column,window_days,n,mae,mse,rmse,mape,r2\n");
    for (name, m) in metrics {
        let window = name.rsplit_once("_w").map_or("", |(_, w)| w);
        body.push_str(&format!("{name},{window},{},{},{},{},{},{}\n", m.n, m.mae, m.mse, m.rmse, opt(m.mape), opt(m.r2)));
    }
    w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(|e| io_error(path, e))
}

fn point(s: &PointSettings) -> Result<(), CliError> {
    let tz = parse_tz(&s.tz)?;
    let input = require(&s.input, "input")?;
    let out = require(&s.out, "out")?;
    let mut opts = CsvOptions::new(tz);
    opts.basis = match s.basis.as_str() {
        "utc" => TimeBasis::Utc,
        "market-local" => TimeBasis::MarketLocal,
        other => return Err(CliError::parse(format!("basis must be utc or market-local, got {other:?}"))),
    };
    let panel = load_csv(input, &opts).map_err(ingest_error)?;
    let res = point_forecasts(&panel, s)?;
    write_point_csv(create(out)?, &res.forecasts, Some(&res.actual), tz).map_err(|e| table_error(out, e))?;
    let metrics_path = s.metrics.clone().unwrap_or_else(|| sibling(out, "_metrics.csv"));
    write_point_metrics(&metrics_path, &res.metrics)?;
    echo(&sibling(out, "_config.json"), s)?;
    print_point_table(&res.metrics);
    Ok(())
}

// ---------------------------------------------------------------- backtest

pub const DEMO_WINDOW: usize = 28;
pub const DEMO_PREDICTION_DAYS: usize = 14;

/// Variant configurations described by the settings.
pub fn backtest_configs(s: &BacktestSettings, forecasters: usize) -> Result<Vec<BacktestConfig>, CliError> {
    let names: Vec<VariantName> = if s.variants.iter().any(|v| v.eq_ignore_ascii_case("all")) {
        VariantName::ALL.to_vec()
    } else {
        s.variants
            .iter()
            .map(|v| v.parse().map_err(|e: VariantError| CliError::parse(e.to_string())))
            .collect::<Result<_, _>>()?
    };
    if names.is_empty() {
        return Err(CliError::parse("no variants selected"));
    }
    let grid = if s.grid.is_empty() {
        QuantileGrid::percentiles()
    } else {
        QuantileGrid::from_values(&s.grid).map_err(|e| CliError::parse(e.to_string()))?
    };
    let l1 = L1Penalty::new(s.lambda).map_err(|e| CliError::parse(e.to_string()))?;
    let bw = s.bandwidth.map_or(SmoothingBandwidth::RuleOfThumb, |h| SmoothingBandwidth::Fixed { h });
    names
        .into_iter()
        .map(|name| {
            let spec = VariantSpec::new(name)
                .with_factor_count(s.factor_count)
                .with_l1(l1)
                .with_bandwidth(bw)
                .with_intercept(s.intercept);
            spec.validate(forecasters).map_err(|e| CliError::parse(format!("{name}: {e}")))?;
            let mut c = BacktestConfig::new(s.window, spec);
            c.grid = grid.clone();
            c.alphas = s.alphas.clone();
            c.crossing_repair = s.crossing_repair;
            c.significance = s.significance;
            c.on_failure = if s.skip_failed { FailurePolicy::SkipAndLog } else { FailurePolicy::Abort };
            c.prediction_days = s.prediction_days;
            c.validate().map_err(|e| CliError::parse(e.to_string()))?;
            Ok(c)
        })
        .collect()
}

/// Synthetic demo inputs sized for `window` plus the prediction span: the
/// demo market and two rolling OLS forecasters (14 and 28 day windows).
pub fn demo_inputs(seed: u64, window: usize, prediction_days: usize) -> Result<(PointForecastMatrix, HourlyTimeSeries), CliError> {
    let windows = vec![14, 28];
    let lags = vec![1, 2, 7];
    let span = window + prediction_days;
    let history = 28 + 7;
    let panel = demo_panel(seed, history + span);
    let s = PointSettings { windows, lags, ..PointSettings::default() };
    let res = point_forecasts(&panel, &s)?;
    Ok((res.forecasts, res.actual))
}

fn print_backtest_table(reports: &[BacktestReport]) {
    let alphas: Vec<f64> = reports.first().map(|r| r.evaluations.iter().map(|e| e.alpha).collect()).unwrap_or_default();
    let mut head = format!("{:<8} {:>10}", "variant", "APS");
    for a in &alphas {
        head.push_str(&format!(" {:>9} {:>4}", format!("AEC{a}"), "K"));
    }
    println!("{head}");
    for r in reports {
        let mut line = format!("{:<8} {:>10.4}", r.label, r.aps);
        for e in &r.evaluations {
            line.push_str(&format!(" {:>9.2} {:>4}", e.coverage.aec, if e.kupiec.reject { "rej" } else { "ok" }));
        }
        println!("{line}");
    }
    for r in reports {
        for sk in &r.provenance.skipped {
            eprintln!("skipped {} {}: {}", r.label, sk.day, sk.reason);
        }
    }
}

fn backtest(s: &BacktestSettings) -> Result<(), CliError> {
    let tz = parse_tz(&s.tz)?;
    let out_dir = require(&s.out_dir, "out_dir")?;
    let (x, y) = if s.seeded_demo {
        let days = s.prediction_days.unwrap_or(DEMO_PREDICTION_DAYS);
        let (x, y) = demo_inputs(s.seed, s.window, days)?;
        std::fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
        let p = out_dir.join("point.csv");
        write_point_csv(create(&p)?, &x, Some(&y), tz).map_err(|e| table_error(&p, e))?;
        (x, y)
    } else {
        let input = require(&s.input, "input")?;
        let (x, y) = read_point_csv(open(input)?, tz, "EUR/MWh").map_err(|e| table_error(input, e))?;
        let y = y.ok_or_else(|| CliError::parse(format!("{}: no `actual` column", input.display())))?;
        (x, y)
    };
    let cfgs = backtest_configs(s, x.ncols())?;
    let reports = compare_variants(&x, &y, &cfgs, Execution::default()).map_err(backtest_error)?;
    write_bundle(out_dir, &reports, tz).map_err(backtest_error)?;
    echo(&out_dir.join("effective_config.json"), s)?;
    print_backtest_table(&reports);
    Ok(())
}

// ---------------------------------------------------------------- evaluate

fn read_actuals(path: &Path, tz: Tz) -> Result<BTreeMap<Timestamp, f64>, CliError> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text).map_err(|e| io_error(path, e))?;
    let header = text.lines().next().unwrap_or_default();
    let series = if header.split(',').any(|h| h.trim() == qra_core::tables::ACTUAL_COLUMN) {
        read_point_csv(text.as_bytes(), tz, "EUR/MWh")
            .map_err(|e| table_error(path, e))?
            .1
            .expect("actual column present")
    } else {
        load_csv(path, &CsvOptions::new(tz)).map_err(ingest_error)?.price_da
    };
    Ok(series.timestamps().iter().copied().zip(series.values().iter().copied()).collect())
}

fn evaluate(s: &EvaluateSettings) -> Result<(), CliError> {
    let tz = parse_tz(&s.tz)?;
    let surface_path = require(&s.surface, "surface")?;
    let actuals_path = require(&s.actuals, "actuals")?;
    let out_dir = require(&s.out_dir, "out_dir")?;
    let surface = read_surface_csv(open(surface_path)?, tz).map_err(|e| table_error(surface_path, e))?;
    let lookup = read_actuals(actuals_path, tz)?;
    let actual = surface
        .timestamps()
        .iter()
        .map(|t| lookup.get(t).copied())
        .collect::<Option<Vec<f64>>>()
        .ok_or_else(|| CliError::other("actuals do not cover every surface timestamp"))?;
    let (evals, aps) = evaluate_values(&surface, &actual, &s.alphas, s.significance).map_err(evaluate_error)?;
    std::fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
    let rows: Vec<_> = evals.iter().map(|e| e.row(&s.label)).collect();
    let p = out_dir.join("metrics.csv");
    write_metrics_csv(create(&p)?, &rows).map_err(evaluate_error)?;
    let p = out_dir.join("aps.csv");
    write_aps_csv(create(&p)?, &[ApsRow { variant: s.label.clone(), aps }]).map_err(evaluate_error)?;
    echo(&out_dir.join("effective_config.json"), s)?;
    println!("{:<10} {:>10}", "APS", format!("{aps:.4}"));
    println!("{:>6} {:>8} {:>10} {:>6} {:>10} {:>6}", "alpha", "AEC", "LR_uc", "rej", "LR_cc", "rej");
    for e in &evals {
        println!(
            "{:>6} {:>8.2} {:>10.3} {:>6} {:>10.3} {:>6}",
            e.alpha, e.coverage.aec, e.kupiec.statistic, e.kupiec.reject, e.christoffersen.statistic, e.christoffersen.reject
        );
    }
    Ok(())
}
