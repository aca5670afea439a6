use nalgebra::{DMatrix, DVector};

use super::PointModelError;

/// Least squares via Householder QR. The caller supplies any intercept
/// column. Fails with [`PointModelError::RankDeficient`] when a diagonal
/// entry of `R` is negligible relative to the largest one.
pub fn fit_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>, PointModelError> {
    let (n, m) = x.shape();
    if y.len() != n {
        return Err(PointModelError::Shape(format!("{n} rows vs {} responses", y.len())));
    }
    if m == 0 || n < m {
        return Err(PointModelError::Shape(format!("need rows >= columns > 0, got {n}x{m}")));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(PointModelError::Shape("non-finite design or response".into()));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..m).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    if scale == 0.0 || (0..m).any(|j| r[(j, j)].abs() <= 1e-10 * scale) {
        return Err(PointModelError::RankDeficient);
    }
    let qty = qr.q().transpose() * y;
    r.solve_upper_triangular(&qty).ok_or(PointModelError::RankDeficient)
}

/// Minimum-norm least squares through the SVD, for designs that
/// [`fit_ols`] rejects as rank deficient (e.g. a constant price window,
/// where every lag column equals the intercept column).
pub fn fit_least_squares_min_norm(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>, PointModelError> {
    if y.len() != x.nrows() {
        return Err(PointModelError::Shape(format!("{} rows vs {} responses", x.nrows(), y.len())));
    }
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return Ok(DVector::zeros(x.ncols()));
    }
    svd.solve(y, 1e-10 * smax).map_err(|e| PointModelError::Shape(e.to_string()))
}
