//! Goodman regression, the covariate-interacted extension with its plug-in
//! estimator, and influence diagnostics.

use nalgebra::{DMatrix, DVector};

use crate::data::AggregateTable;
use crate::error::{Error, Result};
use crate::estimate::EstimateSet;
use crate::linalg::{check_full_rank, ols, Ols};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GoodmanOptions {
    /// Weight geographies by population `N_g`.
    pub weighted: bool,
}

/// Shares interacted with `(1, z_1, …, z_p)`, `k`-major: the column of
/// `x̄_k · z_t` sits at `k·(p+1) + t` with `t = 0` the bare share.
#[derive(Debug, Clone)]
pub struct Design {
    pub matrix: DMatrix<f64>,
    pub labels: Vec<String>,
    pub n_categories: usize,
    pub covariate_names: Vec<String>,
}

impl Design {
    pub fn new(table: &AggregateTable, covariates: &DMatrix<f64>, covariate_names: &[String]) -> Self {
        let (g_count, kk) = table.shares().shape();
        let p = covariates.ncols();
        let width = p + 1;
        let shares = table.shares();
        let matrix = DMatrix::from_fn(g_count, kk * width, |g, c| {
            let (k, t) = (c / width, c % width);
            shares[(g, k)] * if t == 0 { 1.0 } else { covariates[(g, t - 1)] }
        });
        let mut labels = Vec::with_capacity(kk * width);
        for name in table.category_names() {
            labels.push(format!("x_{name}"));
            for z in covariate_names {
                labels.push(format!("x_{name}:z_{z}"));
            }
        }
        Self { matrix, labels, n_categories: kk, covariate_names: covariate_names.to_vec() }
    }

    pub fn n_terms(&self) -> usize {
        self.covariate_names.len() + 1
    }

    /// Row for share vector `x` and covariates `z`.
    pub fn row(&self, x: &[f64], z: &[f64]) -> DVector<f64> {
        let width = self.n_terms();
        DVector::from_fn(self.n_categories * width, |c, _| {
            let (k, t) = (c / width, c % width);
            x[k] * if t == 0 { 1.0 } else { z[t - 1] }
        })
    }
}

/// A fitted linear model in shares (optionally interacted with covariates),
/// one regression per outcome.
#[derive(Debug, Clone)]
pub struct LinearFit {
    pub design: Design,
    pub covariates: DMatrix<f64>,
    pub fits: Vec<Ols>,
    pub weighted: bool,
}

impl LinearFit {
    /// Fitted `f̂_k(z)` for outcome `j`: the prediction at the one-hot share vector of `k`.
    pub fn counterfactual(&self, j: usize, k: usize, z: &[f64]) -> f64 {
        let width = self.design.n_terms();
        let c = &self.fits[j].coefficients;
        c[k * width] + z.iter().enumerate().map(|(t, zt)| c[k * width + t + 1] * zt).sum::<f64>()
    }

    /// Prediction for arbitrary shares `x` and covariates `z`.
    pub fn predict(&self, j: usize, x: &[f64], z: &[f64]) -> f64 {
        self.design.row(x, z).dot(&self.fits[j].coefficients)
    }

    fn z_row(&self, g: usize) -> Vec<f64> {
        self.covariates.row(g).iter().copied().collect()
    }
}

fn fit_design(table: &AggregateTable, covariates: DMatrix<f64>, names: Vec<String>, opts: GoodmanOptions) -> Result<LinearFit> {
    let design = Design::new(table, &covariates, &names);
    let weights = opts.weighted.then(|| table.population().to_vec());
    if let Err(columns) = check_full_rank(&design.matrix, &design.labels) {
        return Err(if columns.iter().any(|c| c.contains(":z_")) {
            Error::CovariateCollinear { columns }
        } else {
            Error::RankDeficient { columns }
        });
    }
    let fits = (0..table.n_outcomes())
        .map(|j| ols(&design.matrix, &DVector::from_vec(table.outcome(j)), weights.as_deref(), &design.labels))
        .collect::<Result<Vec<_>>>()?;
    Ok(LinearFit { design, covariates, fits, weighted: opts.weighted })
}

/// No-intercept regression of outcomes on shares.
pub fn fit_shares(table: &AggregateTable, opts: GoodmanOptions) -> Result<LinearFit> {
    fit_design(table, DMatrix::zeros(table.n_geos(), 0), Vec::new(), opts)
}

/// Regression on shares interacted with the named covariates. Covariates that
/// are identically zero contribute nothing and are dropped.
pub fn fit_interacted(table: &AggregateTable, covariates: &[&str], opts: GoodmanOptions) -> Result<LinearFit> {
    let mut cols = Vec::new();
    let mut names = Vec::new();
    for name in covariates {
        let z = table.covariate(name)?;
        if z.iter().all(|v| *v == 0.0) {
            continue;
        }
        cols.push(z);
        names.push(name.to_string());
    }
    let z = DMatrix::from_fn(table.n_geos(), cols.len(), |g, t| cols[t][g]);
    fit_design(table, z, names, opts)
}

/// Goodman regression: `β̂_k` is the coefficient on `x̄_k`, with HC1 standard errors.
pub fn goodman_fit(table: &AggregateTable, opts: GoodmanOptions) -> Result<EstimateSet> {
    let fit = fit_shares(table, opts)?;
    let (jj, kk) = (table.n_outcomes(), table.n_categories());
    let beta = DMatrix::from_fn(jj, kk, |j, k| fit.fits[j].coefficients[k]);
    let se = DMatrix::from_fn(jj, kk, |j, k| fit.fits[j].covariance[(k, k)].max(0.0).sqrt());
    let mut est = EstimateSet::new("goodman", table.outcome_names().to_vec(), table.category_names().to_vec(), beta, se);
    flag_infeasible(&mut est);
    Ok(est)
}

/// Covariate-interacted regression summarized through the plug-in estimator.
pub fn extended_goodman_fit(table: &AggregateTable, covariates: &[&str], opts: GoodmanOptions) -> Result<EstimateSet> {
    let fit = fit_interacted(table, covariates, opts)?;
    let (jj, kk) = (table.n_outcomes(), table.n_categories());
    let mut beta = DMatrix::zeros(jj, kk);
    let mut se = DMatrix::zeros(jj, kk);
    for j in 0..jj {
        for k in 0..kk {
            let (p, s) = plugin_estimate(&fit, table, j, k)?;
            beta[(j, k)] = p;
            se[(j, k)] = s;
        }
    }
    let local = (0..table.n_geos())
        .map(|g| {
            let z = fit.z_row(g);
            DMatrix::from_fn(jj, kk, |j, k| fit.counterfactual(j, k, &z))
        })
        .collect();
    let mut est = EstimateSet::new("goodman-z", table.outcome_names().to_vec(), table.category_names().to_vec(), beta, se);
    est.local = Some(local);
    flag_infeasible(&mut est);
    Ok(est)
}

fn flag_infeasible(est: &mut EstimateSet) {
    for j in 0..est.n_outcomes() {
        for k in 0..est.n_categories() {
            if !est.feasible(j, k) {
                est.warnings.push(format!(
                    "estimate for {} / {} is outside [0, 1]: {:.6}",
                    est.outcome_names[j], est.category_names[k], est.beta[(j, k)]
                ));
            }
        }
    }
}

/// Plug-in estimate of `β_jk`: the `N_gk`-weighted average of counterfactual
/// predictions with every geography set to the one-hot share vector of `k`.
///
/// The standard error comes from the influence function, combining the
/// spread of the counterfactuals with the (HC1-scaled) coefficient uncertainty.
pub fn plugin_estimate(fit: &LinearFit, table: &AggregateTable, j: usize, k: usize) -> Result<(f64, f64)> {
    let counts = table.category_counts();
    let g_count = table.n_geos();
    let total: f64 = counts.column(k).sum();
    if total <= 0.0 {
        return Err(Error::EmptyCategory(k));
    }
    let preds: Vec<f64> = (0..g_count).map(|g| fit.counterfactual(j, k, &fit.z_row(g))).collect();
    let point = (0..g_count).map(|g| counts[(g, k)] * preds[g]).sum::<f64>() / total;

    // Gradient of the point estimate with respect to the coefficients.
    let width = fit.design.n_terms();
    let q = fit.design.matrix.ncols();
    let mut c = DVector::zeros(q);
    c[k * width] = 1.0;
    for t in 1..width {
        c[k * width + t] = (0..g_count).map(|g| counts[(g, k)] * fit.covariates[(g, t - 1)]).sum::<f64>() / total;
    }
    let ols = &fit.fits[j];
    let a = &ols.xtx_inv * c;
    let gf = g_count as f64;
    let hc1 = if g_count > q { (gf / (gf - q as f64)).sqrt() } else { 1.0 };
    let mean_w = total / gf;
    let mut ss = 0.0;
    for g in 0..g_count {
        let w = if fit.weighted { table.population()[g] } else { 1.0 };
        let score = fit.design.matrix.row(g).transpose().dot(&a) * w * ols.residuals[g];
        let psi = counts[(g, k)] / mean_w * (preds[g] - point) + gf * hc1 * score;
        ss += psi * psi;
    }
    Ok((point, ss.sqrt() / gf))
}

/// Fitted `f̂_k(z)` for every outcome at a fixed covariate value.
pub fn counterfactual_at(fit: &LinearFit, k: usize, z: &[f64]) -> Vec<f64> {
    (0..fit.fits.len()).map(|j| fit.counterfactual(j, k, z)).collect()
}

/// Influence measures for one outcome's regression.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub leverage: Vec<f64>,
    /// Internally studentized residuals.
    pub studentized_residual: Vec<f64>,
    /// `+∞` when the leverage is 1.
    pub cooks_distance: Vec<f64>,
    /// `1 − max_g x̄_gk` per category: how far the one-hot plug-in point lies from the data.
    pub extrapolation_gap: Vec<f64>,
}

pub fn diagnostics(fit: &LinearFit, table: &AggregateTable, j: usize) -> Diagnostics {
    let ols = &fit.fits[j];
    let q = fit.design.matrix.ncols() as f64;
    let s = ols.sigma2.sqrt();
    let g_count = table.n_geos();
    let mut leverage = Vec::with_capacity(g_count);
    let mut studentized_residual = Vec::with_capacity(g_count);
    let mut cooks_distance = Vec::with_capacity(g_count);
    for g in 0..g_count {
        let h = ols.leverage[g];
        let w = if fit.weighted { table.population()[g].sqrt() } else { 1.0 };
        leverage.push(h);
        if h >= 1.0 - 1e-12 {
            studentized_residual.push(f64::NAN);
            cooks_distance.push(f64::INFINITY);
            continue;
        }
        let r = w * ols.residuals[g] / (s * (1.0 - h).sqrt());
        studentized_residual.push(r);
        cooks_distance.push(r * r * h / (q * (1.0 - h)));
    }
    let extrapolation_gap = (0..table.n_categories())
        .map(|k| 1.0 - table.shares().column(k).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Diagnostics { leverage, studentized_residual, cooks_distance, extrapolation_gap }
}
