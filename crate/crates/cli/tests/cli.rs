use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use chrono::{Duration, TimeZone, Utc};
use qra_cli::commands::fetch_with_client;
use qra_cli::settings::FetchSettings;
use qra_core::ingest::{EntsoeClient, HttpResponse, RetryPolicy, Transport};

fn qra(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qra"))
        .args(args)
        .env_remove(qra_cli::TOKEN_ENV)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Hourly UTC panel starting at midnight Berlin on 2015-01-05.
fn write_panel(path: &Path, days: usize, value: impl Fn(usize) -> f64) {
    let t0 = Utc.with_ymd_and_hms(2015, 1, 4, 23, 0, 0).unwrap();
    let mut body = String::from("datetime,price_da\n");
    for i in 0..days * 24 {
        let t = t0 + Duration::hours(i as i64);
        body.push_str(&format!("{},{}\n", t.format("%Y-%m-%dT%H:%M:%SZ"), value(i)));
    }
    std::fs::write(path, body).unwrap();
}

fn wavy(i: usize) -> f64 {
    let x = i as f64;
    40.0 + 8.0 * (x * 0.37).sin() + 5.0 * (x * 0.011).cos() + 3.0 * (x * 1.93).sin()
}

#[test]
fn help_on_every_subcommand() {
    for sub in ["fetch", "point", "backtest", "evaluate"] {
        let o = qra(&[sub, "--help"]);
        assert!(o.status.success(), "{sub}");
        assert!(stdout(&o).contains("Usage"), "{sub}");
    }
}

#[test]
fn fetch_without_token_exits_2_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("panel.csv");
    let o = qra(&["fetch", "--domain", "10Y1001A1001A63L", "--start", "2015-01-01", "--end", "2017-01-01", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("ENTSOE_SECURITY_TOKEN") && err.contains("usage"), "{err}");
    assert!(!out.exists());
}

struct Fixtures {
    bodies: Vec<String>,
    calls: Arc<AtomicUsize>,
}

impl Transport for Fixtures {
    fn get(&self, _url: &str, query: &[(String, String)]) -> Result<HttpResponse, String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let load = query.iter().any(|(k, v)| k == "documentType" && v == "A65");
        Ok(HttpResponse { status: 200, body: self.bodies[usize::from(load)].clone() })
    }
}

fn fixture(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name);
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn cached_fetch_makes_no_network_calls() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("de.csv");
    let settings = FetchSettings {
        domain: Some("10Y1001A1001A63L".into()),
        start: Some("2015-01-05".into()),
        end: Some("2015-01-06".into()),
        out: Some(out.clone()),
        ..FetchSettings::default()
    };
    let client = |calls: &Arc<AtomicUsize>| {
        let t = Fixtures { bodies: vec![fixture("prices_pt60m.xml"), fixture("load_pt15m.xml")], calls: calls.clone() };
        EntsoeClient::new(Box::new(t)).with_retry(RetryPolicy { max_retries: 0, base_delay: std::time::Duration::ZERO })
    };
    let first = Arc::new(AtomicUsize::new(0));
    fetch_with_client(&settings, "secret", client(&first)).unwrap();
    assert_eq!(first.load(Ordering::SeqCst), 2);
    let bytes = std::fs::read(&out).unwrap();
    assert!(String::from_utf8_lossy(&bytes).starts_with("datetime,price_da,quantity\n"));

    let second = Arc::new(AtomicUsize::new(0));
    fetch_with_client(&settings, "secret", client(&second)).unwrap();
    assert_eq!(second.load(Ordering::SeqCst), 0);
    assert_eq!(std::fs::read(&out).unwrap(), bytes);
    assert!(dir.path().join("de_config.json").exists());
}

#[test]
fn point_three_windows_three_rows() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("panel.csv");
    write_panel(&panel, 728 + 7 + 3, wavy);
    let out = dir.path().join("pf.csv");
    let o = qra(&["point", "--input", s(&panel), "--out", s(&out), "--windows", "182,364,728"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 3, "{table}");
    for (row, w) in rows.iter().zip(["182", "364", "728"]) {
        assert!(row.starts_with(&format!("ols_w{w}")), "{row}");
    }
    assert!(table.lines().next().unwrap().contains("MAPE"));
    let metrics = std::fs::read_to_string(dir.path().join("pf_metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 4);
    let header = std::fs::read_to_string(&out).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "datetime,actual,ols_w182,ols_w364,ols_w728");
    assert!(dir.path().join("pf_config.json").exists());
}

#[test]
fn constant_panel_has_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("flat.csv");
    write_panel(&panel, 20, |_| 10.0);
    let out = dir.path().join("pf.csv");
    let o = qra(&["point", "--input", s(&panel), "--out", s(&out), "--windows", "10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = std::fs::read_to_string(dir.path().join("pf_metrics.csv")).unwrap();
    let row: Vec<&str> = metrics.lines().nth(1).unwrap().split(',').collect();
    for v in &row[3..7] {
        assert!(v.parse::<f64>().unwrap().abs() < 1e-9, "{metrics}");
    }
}

#[test]
fn insufficient_history_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("short.csv");
    write_panel(&panel, 20, wavy);
    let out = dir.path().join("pf.csv");
    let o = qra(&["point", "--input", s(&panel), "--out", s(&out), "--windows", "182"]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("insufficient history"), "{}", stderr(&o));
}

#[test]
fn malformed_panel_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("bad.csv");
    std::fs::write(&panel, "datetime,price_da\n2015-01-05T00:00:00Z,abc\n").unwrap();
    let o = qra(&["point", "--input", s(&panel), "--out", s(&dir.path().join("x.csv"))]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn seeded_demo_all_variants_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bundle");
    let t = Instant::now();
    let o = qra(&["backtest", "--seeded-demo", "--variant", "ALL", "--out-dir", s(&out)]);
    let secs = t.elapsed().as_secs_f64();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(secs < 60.0, "{secs} s");
    let table = stdout(&o);
    assert_eq!(table.lines().count(), 10, "{table}");

    for name in ["QRA", "QRM", "LQRA", "FQRA", "FQRM", "sFQRA", "sFQRM", "SQRA", "SQRM"] {
        assert!(out.join(format!("surface_{name}.csv")).exists(), "{name}");
    }
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 9 * 3);
    let prov: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("provenance.json")).unwrap()).unwrap();
    let spans: Vec<_> = prov.as_array().unwrap().iter().map(|p| (p["first_day"].clone(), p["last_day"].clone())).collect();
    assert!(spans.windows(2).all(|w| w[0] == w[1]), "{spans:?}");

    let eval = dir.path().join("eval");
    let o = qra(&[
        "evaluate",
        "--surface",
        s(&out.join("surface_QRA.csv")),
        "--actuals",
        s(&out.join("point.csv")),
        "--out-dir",
        s(&eval),
        "--label",
        "QRA",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ours = std::fs::read_to_string(eval.join("metrics.csv")).unwrap();
    let bundle: Vec<&str> = metrics.lines().filter(|l| l.starts_with("QRA,")).collect();
    assert_eq!(ours.lines().skip(1).collect::<Vec<_>>(), bundle);
    assert!(eval.join("effective_config.json").exists());
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[backtest]\nwindow = 12\nprediction_days = 2\ngrid = [0.25, 0.5, 0.75]\nalphas = [50.0]\n").unwrap();
    let out = dir.path().join("b");
    let o = qra(&["backtest", "--config", s(&cfg), "--seeded-demo", "--window", "20", "--out-dir", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let echo: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("effective_config.json")).unwrap()).unwrap();
    assert_eq!(echo["window"], 12);
    assert_eq!(echo["prediction_days"], 2);
    assert_eq!(echo["variants"], serde_json::json!(["QRA"]));
}

#[test]
fn unknown_config_key_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[backtest]\nwindw = 12\n").unwrap();
    let o = qra(&["backtest", "--config", s(&cfg), "--seeded-demo", "--out-dir", s(&dir.path().join("b"))]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("windw"));
    std::fs::write(&cfg, "colour = \"blue\"\n").unwrap();
    let o = qra(&["point", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn unknown_variant_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = qra(&["backtest", "--seeded-demo", "--variant", "XQRA", "--out-dir", s(&dir.path().join("b"))]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}
