//! Dense least-squares helpers shared by the regression modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance below which a column is considered a linear
/// combination of the columns before it.
pub const RANK_TOLERANCE: f64 = 1e-9;

/// Checks that `x` has full column rank. On failure returns the labels of the
/// first dependent column together with the earlier columns it depends on.
pub fn check_full_rank(x: &DMatrix<f64>, labels: &[String]) -> std::result::Result<(), Vec<String>> {
    let (n, q) = x.shape();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(q);
    // Coefficients of each orthonormal vector in terms of the original columns.
    let mut coords: Vec<Vec<f64>> = Vec::with_capacity(q);
    for j in 0..q {
        let col = x.column(j).into_owned();
        let norm0 = col.norm();
        let mut r = col.clone();
        let mut c = vec![0.0; q];
        c[j] = 1.0;
        // Two passes of modified Gram-Schmidt for stability.
        for _ in 0..2 {
            for (b, bc) in basis.iter().zip(&coords) {
                let d = b.dot(&r);
                r -= b * d;
                for (ci, bci) in c.iter_mut().zip(bc) {
                    *ci -= d * bci;
                }
            }
        }
        let rn = r.norm();
        if norm0 == 0.0 || rn <= RANK_TOLERANCE * norm0.max(1.0) * (n as f64).sqrt().max(1.0) {
            let mut names: Vec<String> = vec![labels[j].clone()];
            if norm0 > 0.0 {
                // Express column j in the earlier columns: x_j = -Σ c_i x_i (i < j).
                for i in 0..j {
                    if c[i].abs() > 1e-6 {
                        names.push(labels[i].clone());
                    }
                }
            }
            return Err(names);
        }
        basis.push(r / rn);
        coords.push(c.into_iter().map(|v| v / rn).collect());
    }
    Ok(())
}

/// Ordinary least squares with HC1 sandwich covariance.
#[derive(Debug, Clone)]
pub struct Ols {
    pub coefficients: DVector<f64>,
    pub fitted: DVector<f64>,
    pub residuals: DVector<f64>,
    /// `(XᵀWX)⁻¹`.
    pub xtx_inv: DMatrix<f64>,
    pub leverage: DVector<f64>,
    /// HC1 covariance of the coefficients.
    pub covariance: DMatrix<f64>,
    /// Residual variance `eᵀWe / (n − q)`.
    pub sigma2: f64,
}

/// Fits `y` on `x` by (optionally weighted) least squares. Rank deficiency is
/// reported with the column labels involved.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>, weights: Option<&[f64]>, labels: &[String]) -> Result<Ols> {
    let (n, q) = x.shape();
    if n < q {
        return Err(Error::InvalidData(format!("{n} observations cannot identify {q} coefficients")));
    }
    let w: Vec<f64> = match weights {
        Some(w) => w.to_vec(),
        None => vec![1.0; n],
    };
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let xw = DMatrix::from_fn(n, q, |i, j| x[(i, j)] * sw[i]);
    check_full_rank(&xw, labels).map_err(|columns| Error::RankDeficient { columns })?;
    let xtx = xw.transpose() * &xw;
    let xtx_inv = spd_inverse(&xtx).ok_or_else(|| Error::RankDeficient { columns: labels.to_vec() })?;
    let yw = DVector::from_fn(n, |i, _| y[i] * sw[i]);
    let coefficients = &xtx_inv * (xw.transpose() * yw);
    let fitted = x * &coefficients;
    let residuals = y - &fitted;
    let leverage = DVector::from_fn(n, |i, _| {
        let row = xw.row(i);
        (row * &xtx_inv * row.transpose())[(0, 0)]
    });
    let dof = (n - q).max(1) as f64;
    let sigma2 = (0..n).map(|i| w[i] * residuals[i] * residuals[i]).sum::<f64>() / dof;
    let mut meat = DMatrix::zeros(q, q);
    for i in 0..n {
        let e = sw[i] * residuals[i];
        let row = xw.row(i);
        meat += row.transpose() * row * (e * e);
    }
    let scale = if n > q { n as f64 / (n - q) as f64 } else { 1.0 };
    let covariance = &xtx_inv * meat * &xtx_inv * scale;
    Ok(Ols { coefficients, fitted, residuals, xtx_inv, leverage, covariance, sigma2 })
}

/// Inverse of a symmetric positive-definite matrix, or `None` if the
/// Cholesky factorization fails.
pub fn spd_inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let sym = (a + a.transpose()) * 0.5;
    sym.cholesky().map(|c| c.inverse())
}

/// Solves `a x = b` for symmetric positive-definite `a`.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let sym = (a + a.transpose()) * 0.5;
    sym.cholesky().map(|c| c.solve(b))
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation with `n − 1` denominator.
pub fn sd(v: &[f64]) -> f64 {
    let m = mean(v);
    let n = v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Linear-interpolation quantile (type 7) of unsorted data.
pub fn quantile(v: &[f64], p: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let h = (s.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}
