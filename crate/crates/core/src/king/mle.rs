use nalgebra::{SMatrix, SVector};
use rayon::prelude::*;

use super::likelihood::{log_likelihood_term, log_normalizing_constant, truncated_mean, TruncNormParams};
use super::tomography::TomographyLine;
use crate::data::AggregateTable;
use crate::error::{Error, Result};
use crate::goodman::{goodman_fit, GoodmanOptions};
use crate::numeric::{nelder_mead, NelderMeadOptions};

#[derive(Debug, Clone)]
pub struct KingFit {
    pub params: TruncNormParams,
    /// Mean of the fitted truncated normal.
    pub beta: [f64; 2],
    /// Delta-method standard errors of `beta` from the numerical Hessian; `NaN` when unavailable.
    pub se: [f64; 2],
    pub log_likelihood: f64,
    pub iterations: usize,
    /// Geographies whose line is a single point and so carry no density.
    pub skipped: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Search box for `(μ₁, μ₂, ln L₁₁, L₂₁, ln L₂₂)`. The likelihood can keep
/// rising as a component collapses onto an edge of the square; the box stops
/// that drift at a standard deviation of 1e-3.
pub const PARAMETER_LOWER: [f64; 5] = [-2.0, -2.0, -6.907_755_278_982_137, -5.0, -6.907_755_278_982_137];
pub const PARAMETER_UPPER: [f64; 5] = [3.0, 3.0, 1.609_437_912_434_100_3, 5.0, 1.609_437_912_434_100_3];

/// Projection onto the search box.
pub fn project(theta: &[f64]) -> Vec<f64> {
    theta.iter().zip(PARAMETER_LOWER.iter().zip(&PARAMETER_UPPER)).map(|(t, (lo, hi))| t.clamp(*lo, *hi)).collect()
}

/// Negative log likelihood in the unconstrained parameterization. Outside the
/// search box it is evaluated at the projection plus the squared distance.
pub fn negative_log_likelihood(theta: &[f64], lines: &[TomographyLine]) -> f64 {
    let inside = project(theta);
    let excess: f64 = theta.iter().zip(&inside).map(|(a, b)| (a - b) * (a - b)).sum();
    excess + box_objective(&inside, lines)
}

fn box_objective(theta: &[f64], lines: &[TomographyLine]) -> f64 {
    let params = TruncNormParams::from_unconstrained(theta);
    let log_z = log_normalizing_constant(&params);
    if !log_z.is_finite() {
        return f64::INFINITY;
    }
    -lines.par_iter().filter_map(|l| log_likelihood_term(&params, l, log_z)).sum::<f64>()
}

/// Tomography lines for outcome `j` of a two-category table.
pub fn lines(table: &AggregateTable, j: usize) -> Result<Vec<TomographyLine>> {
    (0..table.n_geos()).map(|g| TomographyLine::from_table(table, g, j)).collect()
}

/// Maximum-likelihood fit of the truncated bivariate normal for outcome `j`.
pub fn king_mle(table: &AggregateTable, j: usize) -> Result<KingFit> {
    let lines = lines(table, j)?;
    let informative: Vec<TomographyLine> = lines.iter().copied().filter(|l| !l.is_point()).collect();
    let skipped: Vec<usize> = lines.iter().enumerate().filter(|(_, l)| l.is_point()).map(|(g, _)| g).collect();
    if informative.len() < 3 {
        return Err(Error::InvalidData("the truncated normal model needs at least 3 geographies with non-degenerate lines".into()));
    }
    let start_mu = match goodman_fit(table, GoodmanOptions::default()) {
        Ok(e) => [e.beta[(j, 0)].clamp(0.05, 0.95), e.beta[(j, 1)].clamp(0.05, 0.95)],
        Err(_) => [0.5, 0.5],
    };
    let start = TruncNormParams::new(start_mu, [[0.04, 0.0], [0.0, 0.04]])?.to_unconstrained();
    let f = |t: &[f64]| negative_log_likelihood(t, &informative);
    let opts = NelderMeadOptions { max_iter: 5_000, f_tol: 1e-11, x_tol: 1e-4, initial_step: 0.1 };
    let mut best = nelder_mead(f, &start, opts);
    let mut iterations = best.iterations;
    let mut stalled = false;
    // Restart from the optimum until the simplex stops improving.
    for _ in 0..20 {
        let again = nelder_mead(f, &best.x, opts);
        iterations += again.iterations;
        let improved = again.value < best.value - 1e-9 * best.value.abs().max(1.0);
        best = if again.value <= best.value { again } else { best };
        if !improved {
            stalled = true;
            break;
        }
    }
    if !(best.converged || stalled) || !best.value.is_finite() {
        return Err(Error::NoConvergence { iterations, objective: best.value });
    }
    best.x = project(&best.x);
    let params = TruncNormParams::from_unconstrained(&best.x);
    let beta = truncated_mean(&params);
    let mut warnings = Vec::new();
    if !best.converged {
        warnings.push("simplex hit its iteration limit; accepted after a restart failed to improve".to_string());
    }
    let near_edge = best.x.iter().zip(PARAMETER_LOWER.iter().zip(&PARAMETER_UPPER)).any(|(t, (lo, hi))| (t - lo).min(hi - t) < 1e-3);
    if near_edge {
        warnings.push("fit lies on the edge of the parameter search box; the likelihood is degenerate along some direction".to_string());
    }
    if params.correlation().abs() > 0.999 || params.sigma[0][0].min(params.sigma[1][1]) < 1e-10 {
        warnings.push("fitted covariance is nearly singular".to_string());
    }
    if !skipped.is_empty() {
        warnings.push(format!("{} geographies with point-valued tomography lines excluded from the likelihood", skipped.len()));
    }
    let se = standard_errors(&best.x, &informative).unwrap_or_else(|| {
        warnings.push("observed information is not positive definite; standard errors unavailable".to_string());
        [f64::NAN; 2]
    });
    Ok(KingFit { params, beta, se, log_likelihood: -best.value, iterations, skipped, warnings })
}

fn standard_errors(theta: &[f64], lines: &[TomographyLine]) -> Option<[f64; 2]> {
    let f = |t: &[f64]| negative_log_likelihood(t, lines);
    let h = 1e-4;
    let mut hess = SMatrix::<f64, 5, 5>::zeros();
    let f0 = f(theta);
    let shifted = |i: usize, di: f64, j: usize, dj: f64| {
        let mut t = theta.to_vec();
        t[i] += di;
        t[j] += dj;
        f(&t)
    };
    for i in 0..5 {
        for j in i..5 {
            let v = if i == j {
                (shifted(i, h, i, 0.0) - 2.0 * f0 + shifted(i, -h, i, 0.0)) / (h * h)
            } else {
                (shifted(i, h, j, h) - shifted(i, h, j, -h) - shifted(i, -h, j, h) + shifted(i, -h, j, -h)) / (4.0 * h * h)
            };
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let cov = hess.cholesky()?.inverse();
    let mut grad = [SVector::<f64, 5>::zeros(), SVector::<f64, 5>::zeros()];
    for i in 0..5 {
        let mut tp = theta.to_vec();
        let mut tm = theta.to_vec();
        tp[i] += h;
        tm[i] -= h;
        let mp = truncated_mean(&TruncNormParams::from_unconstrained(&tp));
        let mm = truncated_mean(&TruncNormParams::from_unconstrained(&tm));
        for c in 0..2 {
            grad[c][i] = (mp[c] - mm[c]) / (2.0 * h);
        }
    }
    let se = [(grad[0].transpose() * cov * grad[0])[(0, 0)].sqrt(), (grad[1].transpose() * cov * grad[1])[(0, 0)].sqrt()];
    se.iter().all(|v| v.is_finite()).then_some(se)
}
