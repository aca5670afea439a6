//! Mehrotra predictor-corrector interior point method for the bounded dual
//! of the quantile regression linear program, followed by a vertex polish.
//!
//! The primal LP solved here is
//!
//! ```text
//! min  y'a   s.t.  X'a = k X'1,   0 <= a <= 1
//! ```
//!
//! whose equality multipliers are the regression coefficients. At the
//! optimum `a_i = 0` for positive residuals and `a_i = 1` for negative ones.

#![allow(clippy::many_single_char_names)]

use nalgebra::{DMatrix, DVector};

use super::SolverError;

const STEP_SCALE: f64 = 0.99995;

pub(crate) struct LpSolution {
    pub beta: DVector<f64>,
    pub iterations: usize,
}

/// Sum of check losses of `y - X beta`.
pub(crate) fn pinball_sum(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, k: f64) -> f64 {
    let r = y - x * beta;
    r.iter()
        .map(|&u| if u >= 0.0 { k * u } else { (k - 1.0) * u })
        .sum()
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    let mut step = f64::INFINITY;
    for (a, d) in v.iter().zip(dv.iter()) {
        if *d < 0.0 {
            step = step.min(-a / d);
        }
    }
    step
}

/// Cholesky solve of the normal matrix, with escalating diagonal ridge when
/// the factorisation breaks down near the end of the path.
fn factor(m: DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>, SolverError> {
    if let Some(c) = m.clone().cholesky() {
        return Ok(c);
    }
    let p = m.nrows();
    let scale = (0..p).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut ridge = scale * 1e-14;
    for _ in 0..12 {
        let mut r = m.clone();
        for i in 0..p {
            r[(i, i)] += ridge;
        }
        if let Some(c) = r.cholesky() {
            return Ok(c);
        }
        ridge *= 100.0;
    }
    Err(SolverError::RankDeficient)
}

pub(crate) fn interior_point(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    k: f64,
    tol: f64,
    max_iter: usize,
) -> Result<LpSolution, SolverError> {
    let (n, p) = x.shape();
    let xt = x.transpose();
    let b = &xt * DVector::from_element(n, k);

    // Start from the least squares fit, split the residual into z - w.
    let xtx = &xt * x;
    let chol = factor(xtx)?;
    let mut beta = chol.solve(&(&xt * y));
    let r0 = y - x * &beta;
    let mean_abs = r0.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    let y_scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let shift = (0.1 * mean_abs).max(1e-6 * (1.0 + y_scale));
    let mut a = DVector::from_element(n, k);
    let mut s = DVector::from_element(n, 1.0 - k);
    let mut z = r0.map(|v| v.max(0.0) + shift);
    let mut w = r0.map(|v| (-v).max(0.0) + shift);

    let b_norm = b.norm();
    let y_norm = y.norm();
    for it in 0..max_iter {
        let r_p = &b - &xt * &a;
        let r_d = y - x * &beta - &z + &w;
        let comp = a.dot(&z) + s.dot(&w);
        let pobj = y.dot(&a);
        let feasible = r_p.norm() <= 1e-9 * (1.0 + b_norm) && r_d.norm() <= 1e-9 * (1.0 + y_norm);
        if feasible && comp <= tol * (1.0 + pobj.abs()) {
            return Ok(LpSolution { beta, iterations: it });
        }
        let mu = comp / (2 * n) as f64;

        let d = DVector::from_fn(n, |i, _| 1.0 / (z[i] / a[i] + w[i] / s[i]));
        let mut xdx = DMatrix::zeros(p, p);
        for i in 0..n {
            let di = d[i];
            for c in 0..p {
                let xc = x[(i, c)] * di;
                for r in c..p {
                    xdx[(r, c)] += xc * x[(i, r)];
                }
            }
        }
        for c in 0..p {
            for r in 0..c {
                xdx[(r, c)] = xdx[(c, r)];
            }
        }
        let chol = factor(xdx)?;

        let solve = |r_az: &DVector<f64>, r_sw: &DVector<f64>| {
            let rho = DVector::from_fn(n, |i, _| r_az[i] / a[i] - r_sw[i] / s[i] - r_d[i]);
            let rhs = &r_p - &xt * d.component_mul(&rho);
            let dbeta = chol.solve(&rhs);
            let da = d.component_mul(&(x * &dbeta + &rho));
            let dz = DVector::from_fn(n, |i, _| (r_az[i] - z[i] * da[i]) / a[i]);
            let dw = DVector::from_fn(n, |i, _| (r_sw[i] + w[i] * da[i]) / s[i]);
            (da, dbeta, dz, dw)
        };

        // Predictor.
        let r_az = -a.component_mul(&z);
        let r_sw = -s.component_mul(&w);
        let (da, _, dz, dw) = solve(&r_az, &r_sw);
        let ds = -&da;
        let ap = max_step(&a, &da).min(max_step(&s, &ds)).min(1.0);
        let ad = max_step(&z, &dz).min(max_step(&w, &dw)).min(1.0);
        let mu_aff = ((&a + &da * ap).dot(&(&z + &dz * ad)) + (&s + &ds * ap).dot(&(&w + &dw * ad)))
            / (2 * n) as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);

        // Corrector.
        let r_az = DVector::from_fn(n, |i, _| sigma * mu - a[i] * z[i] - da[i] * dz[i]);
        let r_sw = DVector::from_fn(n, |i, _| sigma * mu - s[i] * w[i] - ds[i] * dw[i]);
        let (da, dbeta, dz, dw) = solve(&r_az, &r_sw);
        let ds = -&da;
        let ap = (STEP_SCALE * max_step(&a, &da).min(max_step(&s, &ds))).min(1.0);
        let ad = (STEP_SCALE * max_step(&z, &dz).min(max_step(&w, &dw))).min(1.0);

        a += &da * ap;
        s += &ds * ap;
        beta += &dbeta * ad;
        z += &dz * ad;
        w += &dw * ad;
    }
    Err(SolverError::NotConverged { iterations: max_iter })
}

/// Try to move an interior solution onto an exact vertex of the LP.
///
/// The `p` observations nearest to zero residual (skipping rows that are
/// linearly dependent on those already chosen) are interpolated exactly.
/// Returns the vertex and whether a dual certificate proves it optimal.
pub(crate) fn polish(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: &DVector<f64>,
    k: f64,
) -> Option<(DVector<f64>, bool)> {
    let (n, p) = x.shape();
    let r = y - x * beta;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| r[i].abs().total_cmp(&r[j].abs()).then(i.cmp(&j)));

    // Greedy independent row selection via modified Gram-Schmidt.
    let mut basis: Vec<usize> = Vec::with_capacity(p);
    let mut ortho: Vec<DVector<f64>> = Vec::with_capacity(p);
    for &i in &order {
        if basis.len() == p {
            break;
        }
        let row = x.row(i).transpose();
        let norm0 = row.norm();
        if norm0 == 0.0 {
            continue;
        }
        let mut v = row.clone();
        for q in &ortho {
            let c = q.dot(&v);
            v -= q * c;
        }
        let nv = v.norm();
        if nv > 1e-9 * norm0 {
            ortho.push(v / nv);
            basis.push(i);
        }
    }
    if basis.len() < p {
        return None;
    }
    let xh = DMatrix::from_fn(p, p, |a, c| x[(basis[a], c)]);
    let yh = DVector::from_fn(p, |a, _| y[basis[a]]);
    let lu = xh.clone().lu();
    let vertex = lu.solve(&yh)?;
    if vertex.iter().any(|v| !v.is_finite()) {
        return None;
    }

    // Dual certificate: non-basic observations take a_i = k or k - 1 by the
    // sign of their residual; the basic ones must then land in [k-1, k].
    let rv = y - x * &vertex;
    let scale = 1.0 + y.amax();
    let mut in_basis = vec![false; n];
    for &i in &basis {
        in_basis[i] = true;
    }
    let mut rhs = DVector::zeros(p);
    let mut degenerate = false;
    for i in 0..n {
        if in_basis[i] {
            continue;
        }
        if rv[i].abs() <= 1e-12 * scale {
            degenerate = true;
        }
        let ai = if rv[i] > 0.0 { k } else { k - 1.0 };
        rhs -= x.row(i).transpose() * ai;
    }
    let certified = match xh.transpose().lu().solve(&rhs) {
        Some(ah) if !degenerate => ah.iter().all(|&v| v >= k - 1.0 - 1e-9 && v <= k + 1e-9),
        _ => false,
    };
    Some((vertex, certified))
}
