//! Ridge regression on the interacted design with closed-form leave-one-out
//! selection of the penalty, and the bound-constrained refit.

use nalgebra::{DMatrix, DVector};

use super::basis::InteractedDesign;
use super::qp;
use crate::error::{Error, Result};

/// KKT tolerance required of the bounded refit.
pub const KKT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct RidgeFit {
    pub coefficients: DVector<f64>,
    pub lambda: f64,
    /// `(λ, mean squared leave-one-out error)` over the grid.
    pub loo_curve: Vec<(f64, f64)>,
    pub fitted: DVector<f64>,
    pub residuals: DVector<f64>,
    /// Whether the coefficients come from the bound-constrained refit.
    pub bounded: bool,
    /// Active constraints of the bounded refit, ordered `(g, k, lower|upper)`
    /// as `2·(g·K + k) + {0, 1}`.
    pub active: Vec<bool>,
    pub kkt_residual: f64,
}

/// Logarithmic grid of `n` points spanning `[1e-8, 1e4] · tr(XᵀX)/q`.
pub fn default_lambda_grid(x: &DMatrix<f64>, n: usize) -> Vec<f64> {
    let q = x.ncols().max(1) as f64;
    let scale = (x.transpose() * x).trace() / q;
    let (lo, hi) = (1e-8_f64.ln(), 1e4_f64.ln());
    (0..n)
        .map(|i| scale * (lo + (hi - lo) * i as f64 / (n.max(2) - 1) as f64).exp())
        .collect()
}

fn penalized_gram(x: &DMatrix<f64>, mask: &[bool], lambda: f64) -> DMatrix<f64> {
    let mut a = x.transpose() * x;
    for (i, &m) in mask.iter().enumerate() {
        if m {
            a[(i, i)] += lambda;
        }
    }
    a
}

/// Closed-form ridge solution, hat diagonal and leave-one-out residuals
/// `e_g / (1 − h_gg)`. `None` when the penalized Gram matrix is singular.
pub fn ridge_solve(x: &DMatrix<f64>, y: &DVector<f64>, mask: &[bool], lambda: f64) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let a = penalized_gram(x, mask, lambda);
    let chol = a.cholesky()?;
    let w = chol.solve(&(x.transpose() * y));
    let xt = x.transpose();
    let ainv_xt = chol.solve(&xt);
    let n = x.nrows();
    let h = DVector::from_fn(n, |i, _| x.row(i).dot(&ainv_xt.column(i).transpose()));
    let e = y - x * &w;
    if h.iter().any(|v| !v.is_finite() || *v >= 1.0 - 1e-12) {
        return None;
    }
    let loo = DVector::from_fn(n, |i, _| e[i] / (1.0 - h[i]));
    if !w.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some((w, h, loo))
}

/// Ridge fit with the penalty chosen by leave-one-out error over `grid`.
/// With `bounded`, the selected fit is re-solved so that every one-hot
/// counterfactual prediction lies in `[0, 1]`.
pub fn ridge_fit(design: &InteractedDesign, y: &DVector<f64>, grid: &[f64], bounded: bool) -> Result<RidgeFit> {
    if grid.is_empty() {
        return Err(Error::InvalidData("empty penalty grid".into()));
    }
    let x = &design.matrix;
    let mask = design.penalty_mask();
    let mut curve = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, f64, DVector<f64>)> = None;
    for &lambda in grid {
        match ridge_solve(x, y, &mask, lambda) {
            Some((w, _, loo)) => {
                let err = loo.norm_squared() / loo.len() as f64;
                curve.push((lambda, err));
                if best.as_ref().is_none_or(|(_, e, _)| err < *e) {
                    best = Some((lambda, err, w));
                }
            }
            None => curve.push((lambda, f64::INFINITY)),
        }
    }
    let (lambda, _, w) = best.ok_or_else(|| Error::RankDeficient { columns: design.labels.clone() })?;
    let mut fit = finish(x, y, w, lambda, curve);
    if bounded {
        bound(design, y, &mut fit)?;
    }
    Ok(fit)
}

fn finish(x: &DMatrix<f64>, y: &DVector<f64>, w: DVector<f64>, lambda: f64, loo_curve: Vec<(f64, f64)>) -> RidgeFit {
    let fitted = x * &w;
    let residuals = y - &fitted;
    RidgeFit { coefficients: w, lambda, loo_curve, fitted, residuals, bounded: false, active: Vec::new(), kkt_residual: 0.0 }
}

/// Constraint rows `0 ≤ f̂_k(z_g) ≤ 1` for every geography and category.
pub fn counterfactual_constraints(design: &InteractedDesign) -> (DMatrix<f64>, DVector<f64>) {
    let g_count = design.phi.nrows();
    let kk = design.n_categories;
    let q = design.matrix.ncols();
    let mut a = DMatrix::zeros(2 * g_count * kk, q);
    let mut b = DVector::zeros(2 * g_count * kk);
    for g in 0..g_count {
        for k in 0..kk {
            let r = design.counterfactual_row(g, k);
            let i = 2 * (g * kk + k);
            for (c, v) in r.iter().enumerate() {
                a[(i, c)] = *v;
                a[(i + 1, c)] = -*v;
            }
            b[i + 1] = -1.0;
        }
    }
    (a, b)
}

fn bound(design: &InteractedDesign, y: &DVector<f64>, fit: &mut RidgeFit) -> Result<()> {
    let x = &design.matrix;
    let mask = design.penalty_mask();
    // Tiny ridge on unpenalized columns keeps the objective strictly convex.
    let mut q = penalized_gram(x, &mask, fit.lambda);
    let scale = q.diagonal().amax().max(1.0);
    for i in 0..q.nrows() {
        q[(i, i)] += 1e-12 * scale;
    }
    q *= 2.0;
    let c = x.transpose() * y * 2.0;
    let (a, b) = counterfactual_constraints(design);
    let sol = qp::solve(&q, &c, &a, &b, 1e-12)?;
    if sol.kkt_residual > KKT_TOLERANCE {
        return Err(Error::QpInfeasible(format!("KKT residual {:.3e} above tolerance", sol.kkt_residual)));
    }
    let fitted = x * &sol.x;
    fit.residuals = y - &fitted;
    fit.fitted = fitted;
    fit.coefficients = sol.x;
    fit.bounded = true;
    fit.active = sol.active;
    fit.kkt_residual = sol.kkt_residual;
    Ok(())
}

/// Fitted `f̂_k(z_g)` for every geography.
pub fn counterfactuals(design: &InteractedDesign, w: &DVector<f64>, k: usize) -> Vec<f64> {
    let d = design.dim();
    (0..design.phi.nrows()).map(|g| (0..d).map(|l| design.phi[(g, l)] * w[k * d + l]).sum()).collect()
}
