//! Quantile regression solver kernels: exact check-loss minimisation, its
//! L1-penalised form and a Gaussian-convolution smoothed form.

mod ipm;
mod smoothed;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::QuantileLevel;

pub use smoothed::{
    smoothed_check_loss, smoothed_check_loss_derivative, solve_qr_smoothed, Kernel, SmoothingBandwidth,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("solver did not converge within {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
}

/// A single-quantile regression problem.
#[derive(Debug, Clone, PartialEq)]
pub struct QrProblem {
    design: DMatrix<f64>,
    response: DVector<f64>,
    level: QuantileLevel,
    include_intercept: bool,
}

impl QrProblem {
    pub fn new(
        design: DMatrix<f64>,
        response: DVector<f64>,
        level: QuantileLevel,
        include_intercept: bool,
    ) -> Result<Self, SolverError> {
        let (n, m) = design.shape();
        if response.len() != n {
            return Err(SolverError::DimensionMismatch { expected: n, got: response.len() });
        }
        if m == 0 && !include_intercept {
            return Err(SolverError::InvalidProblem("no regressors and no intercept".into()));
        }
        if n < m + 1 {
            return Err(SolverError::InvalidProblem(format!("{n} observations for {m} regressors")));
        }
        if design.iter().chain(response.iter()).any(|v| !v.is_finite()) {
            return Err(SolverError::InvalidProblem("non-finite entry".into()));
        }
        Ok(Self { design, response, level, include_intercept })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn level(&self) -> QuantileLevel {
        self.level
    }

    pub fn include_intercept(&self) -> bool {
        self.include_intercept
    }

    pub fn nobs(&self) -> usize {
        self.design.nrows()
    }

    pub fn nregressors(&self) -> usize {
        self.design.ncols()
    }

    /// Design with a leading column of ones when the intercept is enabled.
    pub(crate) fn augmented(&self) -> DMatrix<f64> {
        if !self.include_intercept {
            return self.design.clone();
        }
        let (n, m) = self.design.shape();
        DMatrix::from_fn(n, m + 1, |i, j| if j == 0 { 1.0 } else { self.design[(i, j - 1)] })
    }

    /// Sum of check losses for the given coefficients.
    pub fn objective(&self, coeffs: &QrCoefficients) -> f64 {
        let k = self.level;
        (0..self.nobs())
            .map(|i| {
                let fit = coeffs.intercept
                    + self.design.row(i).iter().zip(&coeffs.weights).map(|(a, b)| a * b).sum::<f64>();
                crate::domain::pinball_loss(k, self.response[i] - fit)
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub objective_value: f64,
    pub converged: bool,
}

/// Fitted coefficients for one quantile level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrCoefficients {
    pub intercept: f64,
    pub weights: Vec<f64>,
    pub level: QuantileLevel,
    pub diagnostics: SolverDiagnostics,
}

impl QrCoefficients {
    fn from_augmented(
        beta: &DVector<f64>,
        include_intercept: bool,
        level: QuantileLevel,
        diagnostics: SolverDiagnostics,
    ) -> Self {
        let (intercept, weights) = if include_intercept {
            (beta[0], beta.iter().skip(1).copied().collect())
        } else {
            (0.0, beta.iter().copied().collect())
        };
        Self { intercept, weights, level, diagnostics }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("coefficients serialise")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// Evaluate a fitted quantile at one regressor row.
pub fn predict_quantile(coeffs: &QrCoefficients, x_row: &[f64]) -> Result<f64, SolverError> {
    if x_row.len() != coeffs.weights.len() {
        return Err(SolverError::DimensionMismatch { expected: coeffs.weights.len(), got: x_row.len() });
    }
    Ok(coeffs.intercept + x_row.iter().zip(&coeffs.weights).map(|(a, b)| a * b).sum::<f64>())
}

/// Relative duality-gap tolerance of the interior point method.
pub const GAP_TOLERANCE: f64 = 1e-8;

fn check_rank(x: &DMatrix<f64>) -> Result<(), SolverError> {
    let p = x.ncols();
    if p == 0 {
        return Err(SolverError::RankDeficient);
    }
    let sv = x.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 || sv.iter().any(|&s| s <= max * 1e-11 * (x.nrows().max(p) as f64)) {
        return Err(SolverError::RankDeficient);
    }
    Ok(())
}

/// Core LP route shared by the plain and penalised solvers. Returns the
/// coefficient vector on the augmented design and the iteration count.
fn solve_augmented(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    k: f64,
) -> Result<(DVector<f64>, usize, bool), SolverError> {
    check_rank(x)?;
    let (n, p) = x.shape();
    let max_iter = 10 * (n + p);
    let sol = ipm::interior_point(x, y, k, GAP_TOLERANCE, max_iter)?;
    let ipm_obj = ipm::pinball_sum(x, y, &sol.beta, k);
    match ipm::polish(x, y, &sol.beta, k) {
        Some((vertex, certified)) => {
            let v_obj = ipm::pinball_sum(x, y, &vertex, k);
            if certified || v_obj <= ipm_obj + 1e-12 * (1.0 + ipm_obj.abs()) {
                Ok((vertex, sol.iterations, certified))
            } else {
                Ok((sol.beta, sol.iterations, false))
            }
        }
        None => Ok((sol.beta, sol.iterations, false)),
    }
}

/// Exact quantile regression: minimise the sum of check losses.
pub fn solve_qr(problem: &QrProblem) -> Result<QrCoefficients, SolverError> {
    let x = problem.augmented();
    let k = problem.level.value();
    let (beta, iterations, _) = solve_augmented(&x, &problem.response, k)?;
    let objective_value = ipm::pinball_sum(&x, &problem.response, &beta, k);
    Ok(QrCoefficients::from_augmented(
        &beta,
        problem.include_intercept,
        problem.level,
        SolverDiagnostics { iterations, objective_value, converged: true },
    ))
}

/// L1 penalty on the regression weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L1Penalty {
    pub lambda: f64,
    #[serde(default)]
    pub penalize_intercept: bool,
}

impl L1Penalty {
    pub fn new(lambda: f64) -> Result<Self, SolverError> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(SolverError::InvalidProblem(format!("L1 penalty {lambda} must be >= 0")));
        }
        Ok(Self { lambda, penalize_intercept: false })
    }

    /// Default selection grid `2^i`, `i = -10..=6`.
    pub fn default_grid() -> Vec<f64> {
        (-10..=6).map(|i| 2f64.powi(i)).collect()
    }
}

impl Default for L1Penalty {
    fn default() -> Self {
        Self { lambda: 1.0, penalize_intercept: false }
    }
}

/// L1-penalised quantile regression.
///
/// Regressors are standardised internally (centred when an intercept is
/// present, scaled to unit standard deviation) and the penalty
/// `lambda * sum |w_j|` applies to the standardised weights. The absolute
/// values are expressed as pairs of pseudo-observations `(+-lambda e_j, 0)`,
/// whose check losses add up to `lambda |w_j|`, so the same LP machinery
/// applies. Coefficients are mapped back to the original scale; the
/// reported objective is the penalised one on the standardised scale.
pub fn solve_qr_l1(problem: &QrProblem, penalty: &L1Penalty) -> Result<QrCoefficients, SolverError> {
    if !(penalty.lambda.is_finite() && penalty.lambda >= 0.0) {
        return Err(SolverError::InvalidProblem("negative L1 penalty".into()));
    }
    let (n, m) = problem.design.shape();
    let intercept = problem.include_intercept;
    let mut centers = vec![0.0; m];
    let mut scales = vec![1.0; m];
    for j in 0..m {
        let col = problem.design.column(j);
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        if var <= 0.0 {
            return Err(SolverError::RankDeficient);
        }
        if intercept {
            centers[j] = mean;
        }
        scales[j] = if intercept { var.sqrt() } else { (var + mean * mean).sqrt() };
    }
    let offset = usize::from(intercept);
    let p = m + offset;
    let lambda = penalty.lambda;
    let penalized: Vec<usize> = if lambda > 0.0 {
        (0..p).filter(|&c| c >= offset || penalty.penalize_intercept).collect()
    } else {
        Vec::new()
    };
    let rows = n + 2 * penalized.len();
    let mut x = DMatrix::zeros(rows, p);
    let mut y = DVector::zeros(rows);
    for i in 0..n {
        if intercept {
            x[(i, 0)] = 1.0;
        }
        for j in 0..m {
            x[(i, j + offset)] = (problem.design[(i, j)] - centers[j]) / scales[j];
        }
        y[i] = problem.response[i];
    }
    for (t, &c) in penalized.iter().enumerate() {
        x[(n + 2 * t, c)] = lambda;
        x[(n + 2 * t + 1, c)] = -lambda;
    }
    let k = problem.level.value();
    let (beta, iterations, _) = solve_augmented(&x, &y, k)?;
    let objective_value = ipm::pinball_sum(&x, &y, &beta, k);

    let mut weights = vec![0.0; m];
    let mut icpt = if intercept { beta[0] } else { 0.0 };
    for j in 0..m {
        weights[j] = beta[j + offset] / scales[j];
        icpt -= weights[j] * centers[j];
    }
    Ok(QrCoefficients {
        intercept: icpt,
        weights,
        level: problem.level,
        diagnostics: SolverDiagnostics { iterations, objective_value, converged: true },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lvl(k: f64) -> QuantileLevel {
        QuantileLevel::new(k).unwrap()
    }

    fn intercept_only(y: &[f64], k: f64) -> QrProblem {
        QrProblem::new(DMatrix::zeros(y.len(), 0), DVector::from_column_slice(y), lvl(k), true).unwrap()
    }

    /// Brute-force grid search over the intercept.
    fn grid_min(y: &[f64], k: f64, lo: f64, hi: f64, step: f64) -> f64 {
        let n = ((hi - lo) / step).round() as usize;
        (0..=n)
            .map(|i| {
                let c = lo + i as f64 * step;
                y.iter().map(|v| crate::domain::pinball_loss(lvl(k), v - c)).sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn random_problem(seed: u64, n: usize, m: usize, k: f64) -> QrProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, m, |_, _| rng.gen_range(-2.0..2.0));
        let y = DVector::from_fn(n, |i, _| {
            1.0 + (0..m).map(|j| (j as f64 + 1.0) * x[(i, j)]).sum::<f64>() + rng.gen_range(-1.0..1.0)
        });
        QrProblem::new(x, y, lvl(k), true).unwrap()
    }

    #[test]
    fn median_of_one_to_nine() {
        let y: Vec<f64> = (1..=9).map(f64::from).collect();
        let c = solve_qr(&intercept_only(&y, 0.5)).unwrap();
        assert!((c.intercept - 5.0).abs() < 1e-9, "{}", c.intercept);
        let c = solve_qr(&intercept_only(&y, 0.25)).unwrap();
        assert!((c.intercept - 3.0).abs() < 1e-9, "{}", c.intercept);
        let oracle = grid_min(&y, 0.25, 0.0, 10.0, 0.01);
        assert!((c.diagnostics.objective_value - oracle).abs() < 1e-6);
    }

    #[test]
    fn exact_line_any_level() {
        let x = DMatrix::from_fn(20, 1, |i, _| i as f64 - 5.0);
        let y = x.column(0).map(|v| 2.0 * v);
        for k in [0.1, 0.5, 0.9] {
            let c = solve_qr(&QrProblem::new(x.clone(), y.clone(), lvl(k), true).unwrap()).unwrap();
            assert!(c.intercept.abs() < 1e-9);
            assert!((c.weights[0] - 2.0).abs() < 1e-9);
            assert!(c.diagnostics.objective_value < 1e-9);
        }
    }

    #[test]
    fn rank_deficient_rejected() {
        let x = DMatrix::from_fn(30, 2, |i, _| i as f64);
        let y = DVector::from_fn(30, |i, _| i as f64);
        let p = QrProblem::new(x, y, lvl(0.5), true).unwrap();
        assert_eq!(solve_qr(&p), Err(SolverError::RankDeficient));
    }

    #[test]
    fn predict_examples() {
        let diag = SolverDiagnostics { iterations: 0, objective_value: 0.0, converged: true };
        let c = QrCoefficients { intercept: 7.0, weights: vec![0.0, 0.0], level: lvl(0.5), diagnostics: diag };
        assert_eq!(predict_quantile(&c, &[3.0, 4.0]).unwrap(), 7.0);
        let c = QrCoefficients { intercept: 0.0, weights: vec![2.0], level: lvl(0.5), diagnostics: diag };
        assert_eq!(predict_quantile(&c, &[3.0]).unwrap(), 6.0);
        assert!(matches!(predict_quantile(&c, &[1.0, 2.0]), Err(SolverError::DimensionMismatch { .. })));
    }

    #[test]
    fn optimality_against_perturbations() {
        for (seed, k) in [(1, 0.1), (2, 0.5), (3, 0.77)] {
            let p = random_problem(seed, 120, 3, k);
            let c = solve_qr(&p).unwrap();
            let base = p.objective(&c);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            for _ in 0..200 {
                let mut d = c.clone();
                d.intercept += rng.gen_range(-0.05..0.05);
                for w in &mut d.weights {
                    *w += rng.gen_range(-0.05..0.05);
                }
                assert!(p.objective(&d) >= base - 1e-6);
            }
        }
    }

    #[test]
    fn residual_sign_counts() {
        // Subgradient condition: #(r < 0) <= nk <= #(r <= 0).
        for (seed, k) in [(7, 0.2), (8, 0.5), (9, 0.85)] {
            let p = random_problem(seed, 200, 2, k);
            let c = solve_qr(&p).unwrap();
            let n = p.nobs() as f64;
            let res: Vec<f64> = (0..p.nobs())
                .map(|i| p.response()[i] - predict_quantile(&c, &[p.design()[(i, 0)], p.design()[(i, 1)]]).unwrap())
                .collect();
            let neg = res.iter().filter(|r| **r < -1e-9).count() as f64;
            let nonpos = res.iter().filter(|r| **r <= 1e-9).count() as f64;
            assert!(neg <= n * k + 1e-9 && n * k <= nonpos + 1e-9, "{neg} {nonpos}");
            assert!(nonpos - neg <= 3.0);
        }
    }

    #[test]
    fn scale_equivariance() {
        let p = random_problem(11, 150, 2, 0.3);
        let c = solve_qr(&p).unwrap();
        let scaled = QrProblem::new(p.design().clone(), p.response() * 3.5, p.level(), true).unwrap();
        let cs = solve_qr(&scaled).unwrap();
        assert!((cs.intercept - 3.5 * c.intercept).abs() < 1e-8);
        for (a, b) in cs.weights.iter().zip(&c.weights) {
            assert!((a - 3.5 * b).abs() < 1e-8);
        }
        assert!((cs.diagnostics.objective_value - 3.5 * c.diagnostics.objective_value).abs() < 1e-7);
    }

    #[test]
    fn l1_zero_matches_plain() {
        for (seed, k) in [(21, 0.1), (22, 0.5), (23, 0.9)] {
            let p = random_problem(seed, 150, 3, k);
            let a = solve_qr(&p).unwrap();
            let b = solve_qr_l1(&p, &L1Penalty::new(0.0).unwrap()).unwrap();
            assert!((a.diagnostics.objective_value - b.diagnostics.objective_value).abs() < 1e-6);
            assert!((a.intercept - b.intercept).abs() < 1e-6);
            for (u, v) in a.weights.iter().zip(&b.weights) {
                assert!((u - v).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn l1_huge_penalty_zeroes_weights() {
        let p = random_problem(31, 101, 3, 0.3);
        let c = solve_qr_l1(&p, &L1Penalty::new(1e6).unwrap()).unwrap();
        for w in &c.weights {
            assert!(w.abs() <= 1e-6, "{w}");
        }
        // Intercept is then a sample 0.3-quantile of y (order statistic 31 of 101).
        let mut ys: Vec<f64> = p.response().iter().copied().collect();
        ys.sort_by(f64::total_cmp);
        assert!((c.intercept - ys[30]).abs() < 1e-6, "{} vs {}", c.intercept, ys[30]);
    }

    #[test]
    fn l1_single_feature_matches_grid_oracle() {
        // Penalised objective on the standardised scale, brute-forced over a 2-D grid.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let n = 25;
        let x = DMatrix::from_fn(n, 1, |_, _| rng.gen_range(-1.0..1.0));
        let y = DVector::from_fn(n, |i, _| 0.5 + 1.5 * x[(i, 0)] + rng.gen_range(-0.5..0.5));
        let k = 0.4;
        let p = QrProblem::new(x.clone(), y.clone(), lvl(k), true).unwrap();
        let c = solve_qr_l1(&p, &L1Penalty::new(1.0).unwrap()).unwrap();
        let mean = x.column(0).mean();
        let sd = (x.column(0).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let f = |a: f64, b: f64| {
            (0..n)
                .map(|i| crate::domain::pinball_loss(lvl(k), y[i] - a - b * (x[(i, 0)] - mean) / sd))
                .sum::<f64>()
                + b.abs()
        };
        let mut best = f64::INFINITY;
        let (mut ba, mut bb) = (0.0, 0.0);
        for i in 0..=400 {
            for j in 0..=400 {
                let (a, b) = (-1.0 + i as f64 * 0.01, -1.0 + j as f64 * 0.01);
                let v = f(a, b);
                if v < best {
                    best = v;
                    ba = a;
                    bb = b;
                }
            }
        }
        // Refine around the coarse optimum.
        for i in 0..=400 {
            for j in 0..=400 {
                let (a, b) = (ba - 0.01 + i as f64 * 5e-5, bb - 0.01 + j as f64 * 5e-5);
                best = best.min(f(a, b));
            }
        }
        assert!(c.diagnostics.objective_value <= best + 1e-6);
        assert!(best - c.diagnostics.objective_value < 2e-3, "{} vs {}", best, c.diagnostics.objective_value);
    }

    #[test]
    fn l1_path_monotone() {
        let p = random_problem(51, 120, 3, 0.6);
        let mut last_pen = -1.0;
        let mut last_fit = -1.0;
        for lambda in L1Penalty::default_grid() {
            let c = solve_qr_l1(&p, &L1Penalty::new(lambda).unwrap()).unwrap();
            let fit = p.objective(&c);
            assert!(c.diagnostics.objective_value >= last_pen - 1e-7);
            assert!(fit >= last_fit - 1e-7);
            last_pen = c.diagnostics.objective_value;
            last_fit = fit;
        }
    }

    #[test]
    fn coefficients_json_round_trip() {
        let p = random_problem(61, 60, 2, 0.35);
        let c = solve_qr(&p).unwrap();
        assert_eq!(QrCoefficients::from_json(&c.to_json()).unwrap(), c);
    }
}
