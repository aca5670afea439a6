use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Principal components of a column-demeaned matrix, frozen for reuse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaState {
    pub column_means: Vec<f64>,
    /// One loading vector per retained component, each of length `m`.
    pub loadings: Vec<Vec<f64>>,
    /// Score variances (population convention), non-increasing.
    pub variances: Vec<f64>,
}

/// Numerical rank of a demeaned matrix.
pub(crate) fn numerical_rank(singular: &[f64], n: usize, m: usize) -> usize {
    let max = singular.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    let tol = max * (n.max(m) as f64) * f64::EPSILON * 16.0;
    singular.iter().filter(|&&s| s > tol).count()
}

/// Fit `factors` components. Returns `Err(rank)` when fewer are available.
pub(crate) fn fit_pca(x: &DMatrix<f64>, factors: usize) -> Result<PcaState, usize> {
    let (n, m) = x.shape();
    let column_means: Vec<f64> = (0..m).map(|j| x.column(j).mean()).collect();
    let z = DMatrix::from_fn(n, m, |i, j| x[(i, j)] - column_means[j]);
    let svd = z.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let rank = numerical_rank(&singular, n, m);
    if factors > rank {
        return Err(rank);
    }
    let mut loadings = Vec::with_capacity(factors);
    for &i in order.iter().take(factors) {
        let mut v: Vec<f64> = v_t.row(i).iter().copied().collect();
        let pivot = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(j, _)| j)
            .unwrap_or(0);
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|e| *e = -*e);
        }
        loadings.push(v);
    }
    let variances = singular.iter().take(factors).map(|s| s * s / n as f64).collect();
    Ok(PcaState { column_means, loadings, variances })
}

impl PcaState {
    /// Scores of `x` on the frozen loadings (demeaned with training means).
    pub fn scores(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, m) = x.shape();
        DMatrix::from_fn(n, self.loadings.len(), |i, f| {
            (0..m).map(|j| (x[(i, j)] - self.column_means[j]) * self.loadings[f][j]).sum()
        })
    }
}
