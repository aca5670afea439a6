//! The nine QRA variants: a preprocessing block (identity, row averaging,
//! row standardisation, PCA) composed with one of the three solvers.

mod pca;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use pca::PcaState;

use crate::domain::{repair_crossing, DomainError, PointForecastMatrix, QuantileForecastSurface, QuantileGrid};
use crate::par::{map_indexed, Execution};
use crate::qrsolve::{
    solve_qr, solve_qr_l1, solve_qr_smoothed, L1Penalty, QrCoefficients, QrProblem, SmoothingBandwidth,
    SolverError,
};

#[derive(Debug, Error)]
pub enum VariantError {
    #[error("row {row} has zero standard deviation across forecasters")]
    DegenerateRow { row: usize },
    #[error("{requested} factors requested but the matrix has rank {rank}")]
    RankError { requested: usize, rank: usize },
    #[error("invalid variant configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("solver failed at quantile {level}: {source}")]
    Solver { level: f64, source: SolverError },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VariantName {
    #[serde(rename = "QRA")]
    Qra,
    #[serde(rename = "QRM")]
    Qrm,
    #[serde(rename = "LQRA")]
    Lqra,
    #[serde(rename = "FQRA")]
    Fqra,
    #[serde(rename = "FQRM")]
    Fqrm,
    #[serde(rename = "sFQRA")]
    SFqra,
    #[serde(rename = "sFQRM")]
    SFqrm,
    #[serde(rename = "SQRA")]
    Sqra,
    #[serde(rename = "SQRM")]
    Sqrm,
}

impl VariantName {
    pub const ALL: [VariantName; 9] = [
        VariantName::Qra,
        VariantName::Qrm,
        VariantName::Lqra,
        VariantName::Fqra,
        VariantName::Fqrm,
        VariantName::SFqra,
        VariantName::SFqrm,
        VariantName::Sqra,
        VariantName::Sqrm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VariantName::Qra => "QRA",
            VariantName::Qrm => "QRM",
            VariantName::Lqra => "LQRA",
            VariantName::Fqra => "FQRA",
            VariantName::Fqrm => "FQRM",
            VariantName::SFqra => "sFQRA",
            VariantName::SFqrm => "sFQRM",
            VariantName::Sqra => "SQRA",
            VariantName::Sqrm => "SQRM",
        }
    }

    fn solver(self) -> Solver {
        match self {
            VariantName::Lqra => Solver::L1,
            VariantName::Sqra | VariantName::Sqrm => Solver::Smoothed,
            _ => Solver::Plain,
        }
    }

    fn block(self) -> Block {
        match self {
            VariantName::Qra | VariantName::Lqra | VariantName::Sqra => Block::Identity,
            VariantName::Qrm | VariantName::Sqrm => Block::RowMean,
            VariantName::Fqra => Block::Pca { standardize: false, average: false },
            VariantName::Fqrm => Block::Pca { standardize: false, average: true },
            VariantName::SFqra => Block::Pca { standardize: true, average: false },
            VariantName::SFqrm => Block::Pca { standardize: true, average: true },
        }
    }
}

impl fmt::Display for VariantName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VariantName {
    type Err = VariantError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VariantName::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| VariantError::Config(format!("unknown variant {s:?}")))
    }
}

#[derive(Clone, Copy)]
enum Solver {
    Plain,
    L1,
    Smoothed,
}

#[derive(Clone, Copy)]
enum Block {
    Identity,
    RowMean,
    Pca { standardize: bool, average: bool },
}

/// Divisor used for the per-row standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RowStdConvention {
    /// Divide by `m`.
    #[default]
    Population,
    /// Divide by `m - 1`.
    Sample,
}

fn default_factor_count() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub name: VariantName,
    #[serde(default = "default_factor_count")]
    pub factor_count: usize,
    #[serde(default)]
    pub l1: L1Penalty,
    #[serde(default)]
    pub bw: SmoothingBandwidth,
    #[serde(default = "default_true")]
    pub include_intercept: bool,
    #[serde(default)]
    pub row_std: RowStdConvention,
}

impl VariantSpec {
    pub fn new(name: VariantName) -> Self {
        Self {
            name,
            factor_count: 1,
            l1: L1Penalty::default(),
            bw: SmoothingBandwidth::default(),
            include_intercept: true,
            row_std: RowStdConvention::Population,
        }
    }

    pub fn with_factor_count(mut self, f: usize) -> Self {
        self.factor_count = f;
        self
    }

    pub fn with_l1(mut self, l1: L1Penalty) -> Self {
        self.l1 = l1;
        self
    }

    pub fn with_bandwidth(mut self, bw: SmoothingBandwidth) -> Self {
        self.bw = bw;
        self
    }

    pub fn with_intercept(mut self, include: bool) -> Self {
        self.include_intercept = include;
        self
    }

    pub fn validate(&self, forecasters: usize) -> Result<(), VariantError> {
        if forecasters == 0 {
            return Err(VariantError::Config("no forecaster columns".into()));
        }
        if let Block::Pca { standardize, .. } = self.name.block() {
            if self.factor_count == 0 || self.factor_count > forecasters {
                return Err(VariantError::Config(format!(
                    "factor_count {} outside 1 to {forecasters}",
                    self.factor_count
                )));
            }
            if standardize && forecasters < 2 {
                return Err(VariantError::Config("row standardisation needs at least two forecasters".into()));
            }
        }
        if !(self.l1.lambda.is_finite() && self.l1.lambda >= 0.0) {
            return Err(VariantError::Config("L1 penalty must be >= 0".into()));
        }
        if let SmoothingBandwidth::Fixed { h } = self.bw {
            if !(h.is_finite() && h > 0.0) {
                return Err(VariantError::Config("bandwidth must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Frozen preprocessing applied to training and prediction matrices alike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PreprocessState {
    Identity,
    RowMean,
    Pca {
        standardize_rows: Option<RowStdConvention>,
        average_scores: bool,
        pca: PcaState,
    },
}

/// Rows rescaled to mean 0 and unit standard deviation across columns.
pub fn standardize_rows(x: &DMatrix<f64>, convention: RowStdConvention) -> Result<DMatrix<f64>, VariantError> {
    let (n, m) = x.shape();
    let div = match convention {
        RowStdConvention::Population => m as f64,
        RowStdConvention::Sample => (m as f64 - 1.0).max(1.0),
    };
    let mut out = x.clone();
    for i in 0..n {
        let row = x.row(i);
        let mean = row.sum() / m as f64;
        let sd = (row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / div).sqrt();
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(VariantError::DegenerateRow { row: i });
        }
        for j in 0..m {
            out[(i, j)] = (x[(i, j)] - mean) / sd;
        }
    }
    Ok(out)
}

fn row_means(x: &DMatrix<f64>) -> DMatrix<f64> {
    let m = x.ncols() as f64;
    DMatrix::from_fn(x.nrows(), 1, |i, _| x.row(i).sum() / m)
}

/// Build the regression design from raw point predictions, fitting any
/// state (PCA loadings) on `x`.
pub fn preprocess(spec: &VariantSpec, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, PreprocessState), VariantError> {
    spec.validate(x.ncols())?;
    let state = match spec.name.block() {
        Block::Identity => PreprocessState::Identity,
        Block::RowMean => PreprocessState::RowMean,
        Block::Pca { standardize, average } => {
            let conv = standardize.then_some(spec.row_std);
            let base = match conv {
                Some(c) => standardize_rows(x, c)?,
                None => x.clone(),
            };
            let pca = pca::fit_pca(&base, spec.factor_count)
                .map_err(|rank| VariantError::RankError { requested: spec.factor_count, rank })?;
            PreprocessState::Pca { standardize_rows: conv, average_scores: average, pca }
        }
    };
    let design = apply_preprocess(&state, x)?;
    Ok((design, state))
}

/// Apply a frozen preprocessing state.
pub fn apply_preprocess(state: &PreprocessState, x: &DMatrix<f64>) -> Result<DMatrix<f64>, VariantError> {
    Ok(match state {
        PreprocessState::Identity => x.clone(),
        PreprocessState::RowMean => row_means(x),
        PreprocessState::Pca { standardize_rows: conv, average_scores, pca } => {
            if x.ncols() != pca.column_means.len() {
                return Err(VariantError::DimensionMismatch { expected: pca.column_means.len(), got: x.ncols() });
            }
            let scores = match conv {
                Some(c) => pca.scores(&standardize_rows(x, *c)?),
                None => pca.scores(x),
            };
            if *average_scores {
                row_means(&scores)
            } else {
                scores
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedVariant {
    pub spec: VariantSpec,
    pub forecasters: usize,
    pub preprocessing: PreprocessState,
    pub grid: QuantileGrid,
    /// One coefficient set per grid level, in grid order.
    pub per_quantile: Vec<QrCoefficients>,
}

impl FittedVariant {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fitted variant serialises")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// In-sample sum of check losses at every grid level.
    pub fn objectives(&self) -> Vec<f64> {
        self.per_quantile.iter().map(|c| c.diagnostics.objective_value).collect()
    }
}

pub fn fit_variant(
    spec: &VariantSpec,
    x: &PointForecastMatrix,
    y: &[f64],
    grid: &QuantileGrid,
) -> Result<FittedVariant, VariantError> {
    fit_variant_matrix(spec, x.values(), y, grid, Execution::default())
}

/// Fit on a raw matrix; grid levels are fitted according to `exec`.
pub fn fit_variant_matrix(
    spec: &VariantSpec,
    x: &DMatrix<f64>,
    y: &[f64],
    grid: &QuantileGrid,
    exec: Execution,
) -> Result<FittedVariant, VariantError> {
    if y.len() != x.nrows() {
        return Err(VariantError::Config(format!("{} responses for {} rows", y.len(), x.nrows())));
    }
    let (design, state) = preprocess(spec, x)?;
    let response = DVector::from_column_slice(y);
    let levels = grid.levels();
    let fits = map_indexed(levels.len(), exec, |g| {
        let level = levels[g];
        let wrap = |source| VariantError::Solver { level: level.value(), source };
        let problem = QrProblem::new(design.clone(), response.clone(), level, spec.include_intercept).map_err(wrap)?;
        match spec.name.solver() {
            Solver::Plain => solve_qr(&problem),
            Solver::L1 => solve_qr_l1(&problem, &spec.l1),
            Solver::Smoothed => solve_qr_smoothed(&problem, &spec.bw),
        }
        .map_err(wrap)
    });
    let per_quantile = fits.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(FittedVariant {
        spec: spec.clone(),
        forecasters: x.ncols(),
        preprocessing: state,
        grid: grid.clone(),
        per_quantile,
    })
}

/// Quantile predictions for every row of `x` (rows x grid levels).
pub fn predict_matrix(fv: &FittedVariant, x: &DMatrix<f64>) -> Result<DMatrix<f64>, VariantError> {
    if x.ncols() != fv.forecasters {
        return Err(VariantError::DimensionMismatch { expected: fv.forecasters, got: x.ncols() });
    }
    let design = apply_preprocess(&fv.preprocessing, x)?;
    let mut out = DMatrix::zeros(x.nrows(), fv.per_quantile.len());
    for (g, c) in fv.per_quantile.iter().enumerate() {
        for i in 0..design.nrows() {
            out[(i, g)] = c.intercept + design.row(i).iter().zip(&c.weights).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Ok(out)
}

pub fn predict_variant(
    fv: &FittedVariant,
    x_new: &PointForecastMatrix,
    repair: bool,
) -> Result<QuantileForecastSurface, VariantError> {
    let values = predict_matrix(fv, x_new.values())?;
    let surface = QuantileForecastSurface::new(x_new.timestamps().to_vec(), fv.grid.clone(), values)?;
    Ok(if repair { repair_crossing(&surface) } else { surface })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn names_round_trip() {
        for v in VariantName::ALL {
            assert_eq!(v.as_str().parse::<VariantName>().unwrap(), v);
            let json = serde_json::to_string(&v).unwrap();
            assert_eq!(json, format!("\"{}\"", v.as_str()));
        }
        assert!("XQRA".parse::<VariantName>().is_err());
    }

    #[test]
    fn qrm_row_means() {
        let (d, _) = preprocess(&VariantSpec::new(VariantName::Qrm), &mat(&[&[1.0, 3.0], &[2.0, 4.0]])).unwrap();
        assert_eq!(d.as_slice(), &[2.0, 3.0]);
    }

    #[test]
    fn identical_columns_give_one_component() {
        let x = mat(&[&[1.0, 1.0], &[4.0, 4.0], &[2.0, 2.0], &[7.0, 7.0]]);
        let (d, state) = preprocess(&VariantSpec::new(VariantName::Fqra), &x).unwrap();
        let PreprocessState::Pca { pca, .. } = state else { panic!() };
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((pca.loadings[0][0] - s).abs() < 1e-12 && (pca.loadings[0][1] - s).abs() < 1e-12);
        // score = sqrt(2) * demeaned common column
        for (i, v) in [1.0, 4.0, 2.0, 7.0].iter().enumerate() {
            assert!((d[(i, 0)] - std::f64::consts::SQRT_2 * (v - 3.5)).abs() < 1e-12);
        }
        let two = VariantSpec::new(VariantName::Fqra).with_factor_count(2);
        assert!(matches!(preprocess(&two, &x), Err(VariantError::RankError { requested: 2, rank: 1 })));
    }

    #[test]
    fn row_standardisation_example() {
        let z = standardize_rows(&mat(&[&[10.0, 20.0]]), RowStdConvention::Population).unwrap();
        assert_eq!(z.as_slice(), &[-1.0, 1.0]);
        assert!(matches!(
            standardize_rows(&mat(&[&[1.0, 2.0], &[3.0, 3.0]]), RowStdConvention::Population),
            Err(VariantError::DegenerateRow { row: 1 })
        ));
    }

    #[test]
    fn factor_count_bounds() {
        let x = mat(&[&[1.0, 2.0], &[3.0, 5.0], &[2.0, 0.0]]);
        assert!(matches!(
            preprocess(&VariantSpec::new(VariantName::Fqra).with_factor_count(3), &x),
            Err(VariantError::Config(_))
        ));
        let one = mat(&[&[1.0], &[2.0], &[4.0]]);
        assert!(preprocess(&VariantSpec::new(VariantName::SFqra), &one).is_err());
    }

    #[test]
    fn perfect_forecaster() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y: Vec<f64> = (0..80).map(|_| rng.gen_range(0.0..50.0)).collect();
        let x = DMatrix::from_column_slice(80, 1, &y);
        let grid = QuantileGrid::from_values(&[0.1, 0.5, 0.9]).unwrap();
        let fv = fit_variant_matrix(&VariantSpec::new(VariantName::Qra), &x, &y, &grid, Execution::Sequential).unwrap();
        for c in &fv.per_quantile {
            assert!(c.intercept.abs() < 1e-8 && (c.weights[0] - 1.0).abs() < 1e-8);
            assert!(c.diagnostics.objective_value < 1e-8);
        }
        let new = DMatrix::from_column_slice(3, 1, &[3.0, 17.5, 42.0]);
        let p = predict_matrix(&fv, &new).unwrap();
        for i in 0..3 {
            for g in 0..3 {
                assert!((p[(i, g)] - new[(i, 0)]).abs() < 1e-6);
            }
        }
        assert!(matches!(
            predict_matrix(&fv, &DMatrix::zeros(2, 2)),
            Err(VariantError::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    fn random_problem(seed: u64, n: usize, m: usize) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base: Vec<f64> = (0..n).map(|_| rng.gen_range(10.0..60.0)).collect();
        let x = DMatrix::from_fn(n, m, |i, _| base[i] + rng.gen_range(-3.0..3.0));
        let y = base.iter().map(|b| b + rng.gen_range(-4.0..4.0)).collect();
        (x, y)
    }

    #[test]
    fn qrm_equals_qra_for_one_column() {
        let (x, y) = random_problem(3, 150, 1);
        let grid = QuantileGrid::from_values(&[0.05, 0.5, 0.95]).unwrap();
        let a = fit_variant_matrix(&VariantSpec::new(VariantName::Qra), &x, &y, &grid, Execution::Sequential).unwrap();
        let m = fit_variant_matrix(&VariantSpec::new(VariantName::Qrm), &x, &y, &grid, Execution::Sequential).unwrap();
        assert_eq!(a.per_quantile, m.per_quantile);
    }

    #[test]
    fn lqra_without_penalty_matches_qra() {
        let (x, y) = random_problem(4, 200, 3);
        let grid = QuantileGrid::from_values(&[0.1, 0.5, 0.9]).unwrap();
        let a = fit_variant_matrix(&VariantSpec::new(VariantName::Qra), &x, &y, &grid, Execution::Sequential).unwrap();
        let l = VariantSpec::new(VariantName::Lqra).with_l1(L1Penalty::new(0.0).unwrap());
        let l = fit_variant_matrix(&l, &x, &y, &grid, Execution::Sequential).unwrap();
        for (p, q) in a.per_quantile.iter().zip(&l.per_quantile) {
            assert!((p.intercept - q.intercept).abs() < 1e-6);
            for (u, v) in p.weights.iter().zip(&q.weights) {
                assert!((u - v).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn sqrm_small_bandwidth_matches_qrm() {
        let (x, y) = random_problem(5, 200, 3);
        let grid = QuantileGrid::from_values(&[0.25, 0.75]).unwrap();
        let q = fit_variant_matrix(&VariantSpec::new(VariantName::Qrm), &x, &y, &grid, Execution::Sequential).unwrap();
        let s = VariantSpec::new(VariantName::Sqrm).with_bandwidth(SmoothingBandwidth::Fixed { h: 1e-4 });
        let s = fit_variant_matrix(&s, &x, &y, &grid, Execution::Sequential).unwrap();
        let design = row_means(&x);
        for (g, level) in grid.levels().iter().enumerate() {
            let p = QrProblem::new(design.clone(), DVector::from_vec(y.clone()), *level, true).unwrap();
            assert!((p.objective(&s.per_quantile[g]) - q.per_quantile[g].diagnostics.objective_value).abs() < 1e-3);
        }
    }

    #[test]
    fn full_factor_model_matches_demeaned_qra() {
        let (x, y) = random_problem(6, 180, 4);
        let grid = QuantileGrid::from_values(&[0.1, 0.5, 0.9]).unwrap();
        let f = VariantSpec::new(VariantName::Fqra).with_factor_count(4);
        let f = fit_variant_matrix(&f, &x, &y, &grid, Execution::Sequential).unwrap();
        let means: Vec<f64> = (0..4).map(|j| x.column(j).mean()).collect();
        let demeaned = DMatrix::from_fn(180, 4, |i, j| x[(i, j)] - means[j]);
        let q = fit_variant_matrix(&VariantSpec::new(VariantName::Qra), &demeaned, &y, &grid, Execution::Sequential)
            .unwrap();
        for (a, b) in f.objectives().iter().zip(q.objectives()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn serialisation_round_trip_predicts_identically() {
        let (x, y) = random_problem(7, 120, 3);
        let grid = QuantileGrid::from_values(&[0.2, 0.8]).unwrap();
        for name in VariantName::ALL {
            let fv = fit_variant_matrix(&VariantSpec::new(name), &x, &y, &grid, Execution::Sequential).unwrap();
            let back = FittedVariant::from_json(&fv.to_json()).unwrap();
            assert_eq!(predict_matrix(&fv, &x).unwrap(), predict_matrix(&back, &x).unwrap(), "{name}");
        }
    }

    #[test]
    fn grid_levels_fit_identically_in_parallel() {
        let (x, y) = random_problem(8, 150, 2);
        let grid = QuantileGrid::from_values(&[0.1, 0.3, 0.5, 0.7, 0.9]).unwrap();
        let spec = VariantSpec::new(VariantName::Qra);
        let a = fit_variant_matrix(&spec, &x, &y, &grid, Execution::Sequential).unwrap();
        let b = fit_variant_matrix(&spec, &x, &y, &grid, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn pca_scores_centered_and_uncorrelated(seed in 0u64..1000, m in 2usize..5) {
            let (x, _) = random_problem(seed, 60, m);
            let spec = VariantSpec::new(VariantName::Fqra).with_factor_count(m);
            let (s, state) = preprocess(&spec, &x).unwrap();
            let PreprocessState::Pca { pca, .. } = state else { unreachable!() };
            for a in 0..m {
                prop_assert!(s.column(a).mean().abs() < 1e-10);
                for b in 0..m {
                    let dot: f64 = pca.loadings[a].iter().zip(&pca.loadings[b]).map(|(u, v)| u * v).sum();
                    let expect = f64::from(u8::from(a == b));
                    prop_assert!((dot - expect).abs() < 1e-10);
                    if a != b {
                        let cov = s.column(a).dot(&s.column(b)) / 60.0;
                        prop_assert!(cov.abs() < 1e-8 * (1.0 + pca.variances[0]));
                    }
                }
            }
            prop_assert!(pca.variances.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn standardised_rows_have_unit_scale(rows in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 3), 1..20)) {
            let x = DMatrix::from_fn(rows.len(), 3, |i, j| rows[i][j]);
            prop_assume!(rows.iter().all(|r| (r[0] - r[1]).abs() + (r[1] - r[2]).abs() > 1e-3));
            let z = standardize_rows(&x, RowStdConvention::Population).unwrap();
            for i in 0..z.nrows() {
                let mean = z.row(i).sum() / 3.0;
                let sd = (z.row(i).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
                prop_assert!(mean.abs() <= 1e-12);
                prop_assert!((sd - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn prediction_is_affine_without_intercept(scale in 0.1f64..10.0, seed in 0u64..100) {
            let (x, y) = random_problem(seed, 50, 2);
            let grid = QuantileGrid::from_values(&[0.5]).unwrap();
            let spec = VariantSpec::new(VariantName::Qra).with_intercept(false);
            let fv = fit_variant_matrix(&spec, &x, &y, &grid, Execution::Sequential).unwrap();
            let a = predict_matrix(&fv, &x).unwrap();
            let b = predict_matrix(&fv, &(&x * scale)).unwrap();
            for i in 0..50 {
                prop_assert!((b[(i, 0)] - scale * a[(i, 0)]).abs() < 1e-9 * (1.0 + a[(i, 0)].abs() * scale));
            }
        }
    }
}
