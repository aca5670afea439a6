use chrono::{Duration, NaiveDate};
use proptest::prelude::*;
use qra_core::domain::HourlyTimeSeries;
use qra_core::ingest::MarketPanel;
use qra_core::pointmodel::{
    calibration_coefficients, point_metrics, point_metrics_matrix, rolling_point_forecast, rolling_point_forecasts,
    CalibrationSchedule, FeatureSpec, PointModelConfig, PointModelError,
};
use qra_core::synthetic::{ar_panel, demo_panel, ArPanelSpec};
use qra_core::transform::{PipelineSpec, ScalerKind, VstKind, VstParams};
use qra_core::Execution;

fn day(panel: &MarketPanel, i: usize) -> NaiveDate {
    panel.price_da.first_day().unwrap() + Duration::days(i as i64)
}

#[test]
fn persistence_repeats_yesterday() {
    let panel = demo_panel(1, 40);
    let sched = CalibrationSchedule { window_days: 7, first_prediction_day: day(&panel, 10), last_prediction_day: day(&panel, 39) };
    let pf = rolling_point_forecast(&panel, &PointModelConfig::persistence(), &sched, Execution::Sequential).unwrap();
    assert_eq!(pf.nrows(), 30 * 24);
    let prices = panel.price_da.values();
    for i in 0..pf.nrows() {
        assert_eq!(pf.values()[(i, 0)], prices[10 * 24 + i - 24]);
    }
}

#[test]
fn constant_panel_gives_constant_forecasts() {
    let p = HourlyTimeSeries::from_values("EUR/MWh", NaiveDate::from_ymd_opt(2015, 1, 5).unwrap(), chrono_tz::Europe::Berlin, vec![42.0; 30 * 24]).unwrap();
    let panel = MarketPanel::new(p.clone(), None).unwrap();
    let sched = CalibrationSchedule { window_days: 14, first_prediction_day: day(&panel, 21), last_prediction_day: day(&panel, 29) };
    for cfg in [PointModelConfig::ols("ols", FeatureSpec::prices_only(vec![1, 2, 7])), PointModelConfig::persistence()] {
        let pf = rolling_point_forecast(&panel, &cfg, &sched, Execution::Sequential).unwrap();
        for v in pf.values().iter() {
            assert!((v - 42.0).abs() < 1e-9, "{v}");
        }
        let m = point_metrics_matrix(&p, &pf).unwrap();
        assert!(m[0].1.mae < 1e-9);
    }
}

#[test]
fn recovers_autoregressive_coefficients() {
    let spec = ArPanelSpec::new(11, 420);
    let panel = ar_panel(&spec);
    let mut cfg = PointModelConfig::ols("ols", FeatureSpec::prices_only(vec![1, 2, 7]));
    cfg.per_hour = false;
    let beta = calibration_coefficients(&panel, &cfg, 100, day(&panel, 200)).unwrap();
    assert_eq!(beta.len(), 1);
    for (got, want) in beta[0][1..].iter().zip([0.5, 0.2, 0.15]) {
        assert!((got - want).abs() <= 0.05, "{:?}", beta[0]);
    }
    // Per-hour mode fits 24 separate models.
    cfg.per_hour = true;
    assert_eq!(calibration_coefficients(&panel, &cfg, 100, day(&panel, 200)).unwrap().len(), 24);

    cfg.per_hour = false;
    let sched = CalibrationSchedule { window_days: 100, first_prediction_day: day(&panel, 200), last_prediction_day: day(&panel, 419) };
    let pf = rolling_point_forecast(&panel, &cfg, &sched, Execution::Parallel).unwrap();
    let m = &point_metrics_matrix(&panel.price_da, &pf).unwrap()[0].1;
    let floor = spec.noise_sd * (2.0 / std::f64::consts::PI).sqrt();
    assert!(m.mae <= 1.1 * floor, "mae {} floor {floor}", m.mae);
}

#[test]
fn parallel_matches_sequential_and_labels_columns() {
    let panel = demo_panel(5, 120);
    let cfgs = vec![
        PointModelConfig::ols("ols", FeatureSpec::default()),
        PointModelConfig::ols("asinh", FeatureSpec::default()).with_transform(PipelineSpec::new(
            Some(ScalerKind::MedianMad),
            Some(VstParams::new(VstKind::Arcsinh)),
        )),
    ];
    let (a, b) = (day(&panel, 80), day(&panel, 119));
    let seq = rolling_point_forecasts(&panel, &cfgs, &[28, 56], a, b, Execution::Sequential).unwrap();
    let par = rolling_point_forecasts(&panel, &cfgs, &[28, 56], a, b, Execution::Parallel).unwrap();
    assert_eq!(seq, par);
    assert_eq!(seq.names(), &["ols_w28", "ols_w56", "asinh_w28", "asinh_w56"]);
}

#[test]
fn insufficient_history_is_a_coverage_error() {
    let panel = demo_panel(5, 30);
    let sched = CalibrationSchedule { window_days: 28, first_prediction_day: day(&panel, 20), last_prediction_day: day(&panel, 29) };
    let r = rolling_point_forecast(&panel, &PointModelConfig::ols("ols", FeatureSpec::default()), &sched, Execution::Sequential);
    assert!(matches!(r, Err(PointModelError::Coverage(_))), "{r:?}");
}

#[test]
fn metrics_require_alignment() {
    let panel = demo_panel(5, 4);
    let shifted = panel.price_da.slice_days(1, 3);
    let same = panel.price_da.slice_days(0, 2);
    assert!(matches!(point_metrics(&same, &shifted), Err(PointModelError::Alignment(_))));
    let m = point_metrics(&same, &same).unwrap();
    assert_eq!(m.mae, 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn forecasts_ignore_same_day_and_future_prices(seed in 0u64..1000, bump in -50.0f64..50.0, target in 60usize..70) {
        let panel = demo_panel(seed, 70);
        let cfg = PointModelConfig::ols("asinh", FeatureSpec::default()).with_transform(PipelineSpec::new(
            Some(ScalerKind::MedianMad),
            Some(VstParams::new(VstKind::Arcsinh)),
        ));
        let sched = CalibrationSchedule { window_days: 40, first_prediction_day: day(&panel, target), last_prediction_day: day(&panel, target) };
        let base = rolling_point_forecast(&panel, &cfg, &sched, Execution::Sequential).unwrap();
        let mut values = panel.price_da.values().to_vec();
        for v in &mut values[target * 24..] {
            *v += bump;
        }
        let perturbed = MarketPanel::new(panel.price_da.with_values(values).unwrap(), panel.load_forecast.clone()).unwrap();
        let after = rolling_point_forecast(&perturbed, &cfg, &sched, Execution::Sequential).unwrap();
        prop_assert_eq!(base, after);
    }
}
