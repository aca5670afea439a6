//! Seeded synthetic markets for tests, benches and the CLI demo.

use chrono::{Datelike, Duration, NaiveDate};
use chrono_tz::Tz;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::domain::{HourlyTimeSeries, PointForecastMatrix};
use crate::ingest::MarketPanel;

/// Daily autoregression per hour:
/// `P[d,h] = a_h + sum_l phi_l P[d-l,h] + gamma (L[d,h] - mean) / 1000 + eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArPanelSpec {
    pub seed: u64,
    pub days: usize,
    pub first_day: NaiveDate,
    pub tz: Tz,
    pub intercept: f64,
    /// `(lag in days, coefficient)`.
    pub coefs: Vec<(usize, f64)>,
    pub noise_sd: f64,
    /// Modulate the intercept over the day (`+-30%`).
    pub hourly_profile: bool,
    /// Load coefficient `gamma`; `None` leaves the panel without load.
    pub load_effect: Option<f64>,
}

impl ArPanelSpec {
    pub fn new(seed: u64, days: usize) -> Self {
        Self {
            seed,
            days,
            first_day: NaiveDate::from_ymd_opt(2015, 1, 5).expect("valid date"),
            tz: chrono_tz::Europe::Berlin,
            intercept: 5.0,
            coefs: vec![(1, 0.5), (2, 0.2), (7, 0.15)],
            noise_sd: 2.0,
            hourly_profile: false,
            load_effect: None,
        }
    }
}

const BURN_IN: usize = 60;

pub fn ar_panel(spec: &ArPanelSpec) -> MarketPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let eps = Normal::new(0.0, spec.noise_sd).expect("finite sd");
    let load_noise = Normal::new(0.0, 1500.0).expect("finite sd");
    let max_lag = spec.coefs.iter().map(|c| c.0).max().unwrap_or(0);
    let phi_sum: f64 = spec.coefs.iter().map(|c| c.1).sum();
    let total = spec.days + BURN_IN + max_lag;
    let a = |h: usize| {
        let prof = if spec.hourly_profile {
            1.0 + 0.3 * (2.0 * std::f64::consts::PI * (h as f64 - 6.0) / 24.0).sin()
        } else {
            1.0
        };
        spec.intercept * prof
    };
    let mut price = vec![0.0; total * 24];
    let mut load = vec![0.0; total * 24];
    for d in 0..total {
        let date = spec.first_day + Duration::days(d as i64 - (BURN_IN + max_lag) as i64);
        let weekend = date.weekday().number_from_monday() >= 6;
        for h in 0..24 {
            let shape = 8000.0 * (2.0 * std::f64::consts::PI * (h as f64 - 8.0) / 24.0).sin();
            load[d * 24 + h] = 55000.0 + shape - if weekend { 6000.0 } else { 0.0 } + load_noise.sample(&mut rng);
            let noise = eps.sample(&mut rng);
            price[d * 24 + h] = if d < max_lag {
                a(h) / (1.0 - phi_sum).max(0.05)
            } else {
                let ar: f64 = spec.coefs.iter().map(|&(l, c)| c * price[(d - l) * 24 + h]).sum();
                let ex = spec.load_effect.map_or(0.0, |g| g * (load[d * 24 + h] - 55000.0) / 1000.0);
                a(h) + ar + ex + noise
            };
        }
    }
    let skip = (BURN_IN + max_lag) * 24;
    let p = HourlyTimeSeries::from_values("EUR/MWh", spec.first_day, spec.tz, price[skip..].to_vec())
        .expect("well-formed synthetic series");
    let l = spec.load_effect.map(|_| {
        HourlyTimeSeries::from_values("MWh", spec.first_day, spec.tz, load[skip..].to_vec()).expect("well-formed")
    });
    MarketPanel::new(p, l).expect("shared index")
}

/// Point forecasts and actuals with `y = x + N(0, 1)`: column 0 is the
/// exact conditional mean `x`; further columns add independent
/// `N(0, 0.5^2)` noise to it. `x` follows a daily-persistent level with an
/// hourly shape.
pub fn linear_gaussian(seed: u64, days: usize, forecasters: usize) -> (PointForecastMatrix, HourlyTimeSeries) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let first = NaiveDate::from_ymd_opt(2015, 1, 5).expect("valid date");
    let tz = chrono_tz::Europe::Berlin;
    let n = days * 24;
    let mut level = 40.0;
    let mut x = Vec::with_capacity(n);
    for _ in 0..days {
        level = 40.0 + 0.8 * (level - 40.0) + 3.0 * unit.sample(&mut rng);
        for h in 0..24 {
            let shape = 6.0 * (2.0 * std::f64::consts::PI * (h as f64 - 7.0) / 24.0).sin();
            x.push(level + shape + 2.0 * unit.sample(&mut rng));
        }
    }
    let y: Vec<f64> = x.iter().map(|v| v + unit.sample(&mut rng)).collect();
    let m = forecasters.max(1);
    let mut values = DMatrix::from_fn(n, m, |i, _| x[i]);
    for j in 1..m {
        for i in 0..n {
            values[(i, j)] += 0.5 * unit.sample(&mut rng);
        }
    }
    let actual = HourlyTimeSeries::from_values("EUR/MWh", first, tz, y).expect("well-formed");
    let names = (0..m).map(|j| format!("f{}", j + 1)).collect();
    let pf = PointForecastMatrix::new(actual.timestamps().to_vec(), names, values).expect("well-formed");
    (pf, actual)
}

/// The bundled demo market: hourly profile, load effect, 3-lag dynamics.
pub fn demo_panel(seed: u64, days: usize) -> MarketPanel {
    let mut spec = ArPanelSpec::new(seed, days);
    spec.intercept = 8.0;
    spec.hourly_profile = true;
    spec.load_effect = Some(1.2);
    spec.noise_sd = 4.0;
    ar_panel(&spec)
}
